//! The deconvolved residual-marked empirical process and its KS / CvM
//! reductions.
//!
//! For observation `i` and frequency `xi` the process accumulates
//!
//! ```text
//! integral [(Y_i - g(x))^2 - sigma^2] Kb((x - W_i)/b) exp(i x xi) dx
//! ```
//!
//! Two evaluation paths are provided. The closed-form path applies when `g`
//! is at most linear: the integrand is then a quadratic in `x` and every
//! term reduces to the Fourier multiplier `h = kft(b xi)/fe(xi)` and its
//! derivatives. With residual `r_i = Y_i - g(W_i)` and slope `a1` it reads
//!
//! ```text
//! exp(i W_i xi) [ (r_i^2 - sigma^2) h + 2 i a1 r_i h' - a1^2 h'' ]
//! ```
//!
//! The quadrature path tabulates `Kb` numerically and integrates over `x`
//! directly; it handles any mean and serves as the reference for the
//! closed form.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::eiv_regression::MeanModel;
use crate::error::{Error, Result};
use crate::error_cf::ErrorCf;
use crate::kernels::{fourier_multiplier, simpson_weights, Bandwidth, DeconKernel, KernelSpec, QuadratureConfig};
use crate::sample::Sample;

/// Tolerance on the imaginary part of quantities that are real in exact
/// arithmetic.
const IMAG_TOL: f64 = 1e-8;

/// Kernel-tail threshold (relative to `sup |Kb|`) that sets the x-range of
/// the quadrature path.
const TAIL_TOL: f64 = 1e-14;

/// Node spacing, in kernel units, of the quadrature path.
const X_STEP: f64 = 0.1;

/// Finite set of frequencies over which the process is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyGrid {
    points: Vec<f64>,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid::uniform(-1.0, 1.0, 41).expect("default grid is valid")
    }
}

impl FrequencyGrid {
    /// `count` equally spaced points on `[lo, hi]`; zero is added when it
    /// lies inside the interval but falls between two points.
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidGrid(format!("need lo < hi, got [{lo}, {hi}]")));
        }
        if count < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        let step = (hi - lo) / (count - 1) as f64;
        let mut points: Vec<f64> = (0..count)
            .map(|j| {
                let p = lo + j as f64 * step;
                // symmetric grids: snap rounding noise so that -xi and xi match exactly
                if (p / step).fract().abs() < 1e-9 && lo == -hi {
                    (p / step).round() * step
                } else {
                    p
                }
            })
            .collect();
        *points.last_mut().unwrap() = hi;
        points[0] = lo;
        if lo == -hi {
            let n = points.len();
            for j in 0..n / 2 {
                points[n - 1 - j] = -points[j];
            }
            if n % 2 == 1 {
                points[n / 2] = 0.0;
            }
        }
        if lo < 0.0 && hi > 0.0 && !points.contains(&0.0) {
            let at = points.partition_point(|&p| p < 0.0);
            points.insert(at, 0.0);
        }
        Self::from_points(points)
    }

    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least two points".into()));
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidGrid("points must be finite and strictly increasing".into()));
        }
        let (lo, hi) = (points[0], points[points.len() - 1]);
        if lo <= 0.0 && hi >= 0.0 && !points.contains(&0.0) {
            return Err(Error::InvalidGrid("grid spanning zero must contain zero".into()));
        }
        Ok(FrequencyGrid { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of `xi = 0`, if present.
    pub fn zero_index(&self) -> Option<usize> {
        self.points.iter().position(|&p| p == 0.0)
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.points.len();
        (0..n).all(|j| self.points[j] == -self.points[n - 1 - j])
    }
}

/// `sqrt(n) S_n(xi)` on a frequency grid, with the ingredients used to
/// build it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestProcess {
    pub grid: FrequencyGrid,
    pub values: Vec<Complex64>,
    pub sigma_n_sq: f64,
    pub theta: MeanModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestStatistics {
    pub ks: f64,
    pub cvm: f64,
}

impl TestStatistics {
    pub fn of(p: &TestProcess) -> Self {
        TestStatistics {
            ks: ks_statistic(p),
            cvm: cvm_statistic(p),
        }
    }
}

/// Sup over the grid of `|sqrt(n) S_n(xi)|`.
pub fn ks_statistic(p: &TestProcess) -> f64 {
    sup_modulus(&p.values)
}

/// Trapezoidal integral of `|sqrt(n) S_n(xi)|^2` over the grid.
pub fn cvm_statistic(p: &TestProcess) -> f64 {
    integrated_square(p.grid.points(), &p.values)
}

pub(crate) fn sup_modulus(values: &[Complex64]) -> f64 {
    values.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

pub(crate) fn integrated_square(points: &[f64], values: &[Complex64]) -> f64 {
    points
        .windows(2)
        .zip(values.windows(2))
        .map(|(x, v)| 0.5 * (x[1] - x[0]) * (v[0].norm_sqr() + v[1].norm_sqr()))
        .sum()
}

/// How the x-integrals are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvaluationPath {
    /// Closed form when the mean is at most linear and the error CF is
    /// usable at every needed frequency; quadrature otherwise.
    #[default]
    Auto,
    ClosedForm,
    Quadrature,
}

/// Bandwidth, error characteristic function, kernel and quadrature settings
/// that together define the deconvolution kernel `Kb`.
#[derive(Debug, Clone)]
pub struct Deconvolution {
    pub bandwidth: Bandwidth,
    pub cf: ErrorCf,
    pub kernel: KernelSpec,
    pub quad: QuadratureConfig,
    pub path: EvaluationPath,
}

/// Per-observation terms on a set of frequencies, split so that
/// `term_i(xi) = marks[xi][i] - sigma^2 * weights[xi][i]`.
#[derive(Debug, Clone)]
pub(crate) struct ObservationTerms {
    /// `exp(i W xi) [r^2 h + 2 i a1 r h' - a1^2 h'']`
    pub marks: Vec<Vec<Complex64>>,
    /// `exp(i W xi) h`
    pub weights: Vec<Vec<Complex64>>,
}

impl ObservationTerms {
    /// Weighted averages `(1/n) sum v_i marks_i`, `(1/n) sum v_i weights_i`
    /// for each frequency; `None` weights mean all ones. Sums run in
    /// observation order.
    pub fn averages(&self, v: Option<&[f64]>) -> (Vec<Complex64>, Vec<Complex64>) {
        let avg = |rows: &Vec<Vec<Complex64>>| -> Vec<Complex64> {
            rows.iter()
                .map(|row| {
                    let n = row.len() as f64;
                    let s: Complex64 = match v {
                        None => row.iter().sum(),
                        Some(v) => row.iter().zip(v).map(|(t, &w)| t * w).sum(),
                    };
                    s / n
                })
                .collect()
        };
        (avg(&self.marks), avg(&self.weights))
    }
}

/// Coefficients of the closed-form terms that do not depend on the error
/// law: the phases `exp(i W xi)` and the residual polynomials.
#[derive(Debug, Clone)]
pub(crate) struct PhaseTable {
    /// per frequency: `(exp(i W xi), exp(i W xi) r^2, exp(i W xi) 2 i a1 r)`
    rows: Vec<Vec<[Complex64; 3]>>,
    slope_sq: f64,
}

impl PhaseTable {
    pub fn new(sample: &Sample, theta: &MeanModel, points: &[f64]) -> Result<Self> {
        let (_, slope) = theta.affine().ok_or_else(|| {
            Error::InvalidArgument("closed form needs a mean of degree <= 1".into())
        })?;
        let resid: Vec<f64> = sample
            .y()
            .iter()
            .zip(sample.w())
            .map(|(&y, &w)| y - theta.eval(w))
            .collect();
        let rows = points
            .par_iter()
            .map(|&xi| {
                sample
                    .w()
                    .iter()
                    .zip(&resid)
                    .map(|(&w, &r)| {
                        let e = Complex64::from_polar(1.0, w * xi);
                        [e, e * (r * r), e * Complex64::new(0.0, 2.0 * slope * r)]
                    })
                    .collect()
            })
            .collect();
        Ok(PhaseTable {
            rows,
            slope_sq: slope * slope,
        })
    }

    /// Sums over observations of the three phase columns, per frequency.
    pub fn column_sums(&self, v: Option<&[f64]>) -> Vec<[Complex64; 3]> {
        self.rows
            .iter()
            .map(|row| {
                let mut s = [Complex64::new(0.0, 0.0); 3];
                for (i, t) in row.iter().enumerate() {
                    let w = v.map_or(1.0, |v| v[i]);
                    for k in 0..3 {
                        s[k] += t[k] * w;
                    }
                }
                s
            })
            .collect()
    }

    /// Combine phase sums with multipliers `[h, h', h'']` into
    /// `(sum marks, sum weights)` per frequency.
    pub fn combine(&self, sums: &[[Complex64; 3]], mult: &[[f64; 3]]) -> (Vec<Complex64>, Vec<Complex64>) {
        sums.iter()
            .zip(mult)
            .map(|(s, &[h, h1, h2])| (s[1] * h + s[2] * h1 - s[0] * (self.slope_sq * h2), s[0] * h))
            .unzip()
    }

    pub fn terms(&self, mult: &[[f64; 3]]) -> ObservationTerms {
        let (marks, weights) = self
            .rows
            .iter()
            .zip(mult)
            .map(|(row, &[h, h1, h2])| {
                row.iter()
                    .map(|t| (t[1] * h + t[2] * h1 - t[0] * (self.slope_sq * h2), t[0] * h))
                    .unzip::<_, _, Vec<_>, Vec<_>>()
            })
            .unzip();
        ObservationTerms {
            marks,
            weights,
        }
    }
}

/// Frequencies at which the closed form is evaluated: zero first, then the
/// grid.
pub(crate) fn with_zero(grid: &FrequencyGrid) -> Vec<f64> {
    std::iter::once(0.0).chain(grid.points().iter().copied()).collect()
}

fn check_real(z: Complex64) -> Result<f64> {
    if z.im.abs() > IMAG_TOL * (1.0 + z.re.abs()) {
        return Err(Error::QuadratureNotConverged {
            change: z.im.abs(),
            tol: IMAG_TOL * (1.0 + z.re.abs()),
        });
    }
    Ok(z.re)
}

fn check_variance(v: f64) -> Result<f64> {
    if v < 0.0 || !v.is_finite() {
        Err(Error::NegativeVarianceEstimate(v))
    } else {
        Ok(v)
    }
}

impl Deconvolution {
    pub fn new(bandwidth: Bandwidth, cf: ErrorCf) -> Self {
        Deconvolution {
            bandwidth,
            cf,
            kernel: KernelSpec::default(),
            quad: QuadratureConfig::default(),
            path: EvaluationPath::Auto,
        }
    }

    pub fn with_path(mut self, path: EvaluationPath) -> Self {
        self.path = path;
        self
    }

    pub fn with_cf(&self, cf: ErrorCf) -> Self {
        Deconvolution { cf, ..self.clone() }
    }

    /// `[h, h', h'']` at each point.
    pub fn multipliers(&self, points: &[f64]) -> Result<Vec<[f64; 3]>> {
        points
            .iter()
            .map(|&xi| fourier_multiplier(xi, self.bandwidth, &self.cf, &self.kernel))
            .collect()
    }

    pub(crate) fn use_closed_form(&self, theta: &MeanModel, points: &[f64]) -> Result<bool> {
        match self.path {
            EvaluationPath::ClosedForm => Ok(true),
            EvaluationPath::Quadrature => Ok(false),
            EvaluationPath::Auto => {
                if theta.affine().is_none() {
                    return Ok(false);
                }
                match self.multipliers(points) {
                    Ok(_) => Ok(true),
                    Err(Error::DegenerateCf { .. }) if self.cf.is_estimated() => Ok(false),
                    Err(e) => Err(e),
                }
            }
        }
    }

    pub(crate) fn closed_form_terms(&self, sample: &Sample, theta: &MeanModel, points: &[f64]) -> Result<ObservationTerms> {
        let mult = self.multipliers(points)?;
        Ok(PhaseTable::new(sample, theta, points)?.terms(&mult))
    }

    /// Per-observation terms by whichever path applies.
    pub(crate) fn observation_terms(&self, sample: &Sample, theta: &MeanModel, points: &[f64]) -> Result<ObservationTerms> {
        if self.use_closed_form(theta, points)? {
            return self.closed_form_terms(sample, theta, points);
        }
        let q = QuadraturePath::new(self)?;
        let (marks, weights) = points
            .par_iter()
            .map(|&xi| {
                sample
                    .y()
                    .iter()
                    .zip(sample.w())
                    .map(|(&y, &w)| {
                        let m = q.integrate(w, xi, |x| {
                            let r = y - theta.eval(x);
                            r * r
                        });
                        (m, q.integrate(w, xi, |_| 1.0))
                    })
                    .unzip::<_, _, Vec<_>, Vec<_>>()
            })
            .unzip();
        Ok(ObservationTerms {
            marks,
            weights,
        })
    }

    /// Plug-in variance `(1/n) sum integral (Y_i - g(x))^2 Kb((x - W_i)/b) dx`.
    pub fn sigma_n_sq(&self, sample: &Sample, theta: &MeanModel) -> Result<f64> {
        if self.use_closed_form(theta, &[0.0])? {
            let terms = self.closed_form_terms(sample, theta, &[0.0])?;
            let (marks, _) = terms.averages(None);
            check_variance(check_real(marks[0])?)
        } else {
            let q = QuadraturePath::new(self)?;
            let v = q.average(sample, theta, 0.0, 0.0);
            check_variance(check_real(v)?)
        }
    }

    /// `sqrt(n) S_n(xi)` on the grid for the given centring variance.
    pub fn empirical_process(
        &self,
        sample: &Sample,
        theta: &MeanModel,
        sigma_sq: f64,
        grid: &FrequencyGrid,
    ) -> Result<TestProcess> {
        let root_n = (sample.len() as f64).sqrt();
        let values: Vec<Complex64> = if self.use_closed_form(theta, grid.points())? {
            let terms = self.closed_form_terms(sample, theta, grid.points())?;
            let (marks, weights) = terms.averages(None);
            marks.iter().zip(&weights).map(|(m, w)| (m - w * sigma_sq) * root_n).collect()
        } else {
            let q = QuadraturePath::new(self)?;
            grid.points()
                .par_iter()
                .map(|&xi| q.average(sample, theta, sigma_sq, xi) * root_n)
                .collect()
        };
        if let Some(z) = grid.zero_index() {
            check_real(values[z])?;
        }
        Ok(TestProcess {
            grid: grid.clone(),
            values,
            sigma_n_sq: sigma_sq,
            theta: theta.clone(),
        })
    }

    /// Plug-in variance followed by the process centred at it.
    pub fn test_process(&self, sample: &Sample, theta: &MeanModel, grid: &FrequencyGrid) -> Result<TestProcess> {
        let s2 = self.sigma_n_sq(sample, theta)?;
        self.empirical_process(sample, theta, s2, grid)
    }
}

/// Free-function form of [`Deconvolution::sigma_n_sq`].
pub fn sigma_n_sq(sample: &Sample, theta: &MeanModel, decon: &Deconvolution) -> Result<f64> {
    decon.sigma_n_sq(sample, theta)
}

/// Free-function form of [`Deconvolution::empirical_process`].
pub fn empirical_process(
    sample: &Sample,
    theta: &MeanModel,
    sigma_sq: f64,
    decon: &Deconvolution,
    grid: &FrequencyGrid,
) -> Result<TestProcess> {
    decon.empirical_process(sample, theta, sigma_sq, grid)
}

/// Nested quadrature: `Kb` tabulated on a uniform grid of kernel units
/// `u = (x - W_i)/b`, then Simpson in `u` for every observation.
#[derive(Debug, Clone)]
pub struct QuadraturePath {
    bandwidth: f64,
    nodes: Vec<f64>,
    weighted_kernel: Vec<f64>,
}

impl QuadraturePath {
    pub fn new(decon: &Deconvolution) -> Result<Self> {
        let kern = DeconKernel::new(decon.bandwidth, &decon.cf, &decon.kernel, &decon.quad)?;
        let radius = kern.support_radius(TAIL_TOL)? * 1.25 + 10.0;
        let half = (radius / X_STEP).ceil() as usize;
        let intervals = 2 * half;
        let nodes: Vec<f64> = (0..=intervals).map(|j| (j as f64 - half as f64) * X_STEP).collect();
        let weights = simpson_weights(intervals, X_STEP);
        let values = nodes.par_iter().map(|&u| kern.eval(u)).collect::<Result<Vec<f64>>>()?;
        let weighted_kernel = values.iter().zip(&weights).map(|(k, w)| k * w).collect();
        Ok(QuadraturePath {
            bandwidth: decon.bandwidth.get(),
            nodes,
            weighted_kernel,
        })
    }

    /// Half-width of the tabulated range, in kernel units.
    pub fn radius(&self) -> f64 {
        -self.nodes[0]
    }

    /// `integral f(x) Kb((x - w)/b) exp(i x xi) dx` for an arbitrary `f`.
    pub fn integrate(&self, w: f64, xi: f64, f: impl Fn(f64) -> f64) -> Complex64 {
        let b = self.bandwidth;
        let mut acc = Complex64::new(0.0, 0.0);
        for (&u, &kw) in self.nodes.iter().zip(&self.weighted_kernel) {
            let x = w + b * u;
            acc += Complex64::from_polar(kw * f(x), x * xi);
        }
        acc * b
    }

    /// `(1/n) sum integral [(Y_i - g(x))^2 - sigma^2] Kb exp(i x xi) dx`.
    pub fn average(&self, sample: &Sample, theta: &MeanModel, sigma_sq: f64, xi: f64) -> Complex64 {
        let total: Complex64 = sample
            .y()
            .iter()
            .zip(sample.w())
            .map(|(&y, &w)| {
                self.integrate(w, xi, |x| {
                    let r = y - theta.eval(x);
                    r * r - sigma_sq
                })
            })
            .sum();
        total / sample.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eiv_regression::MeanFamily;
    use approx::assert_relative_eq;

    fn tiny_sample() -> Sample {
        Sample::new(
            vec![1.2, -0.4, 2.5, 0.3, 1.9],
            vec![0.1, -1.3, 0.8, 0.4, 1.5],
            None,
        )
        .unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = FrequencyGrid::default();
        assert_eq!(g.len(), 41);
        assert_eq!(g.lo(), -1.0);
        assert_eq!(g.hi(), 1.0);
        assert_eq!(g.zero_index(), Some(20));
        assert!(g.is_symmetric());
        let g = FrequencyGrid::uniform(-1.0, 1.0, 40).unwrap();
        assert_eq!(g.len(), 41);
        assert!(g.zero_index().is_some());
        assert!(FrequencyGrid::uniform(1.0, -1.0, 5).is_err());
        assert!(FrequencyGrid::uniform(0.0, 1.0, 1).is_err());
        assert!(FrequencyGrid::from_points(vec![0.0, 0.0, 1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![-1.0, 1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![0.5, 1.0]).is_ok());
    }

    #[test]
    fn ks_and_cvm_hand_values() {
        let theta = MeanModel::new(MeanFamily::Constant, vec![0.0]).unwrap();
        let grid = FrequencyGrid::from_points(vec![-1.0, 0.0, 1.0]).unwrap();
        let mut p = TestProcess {
            grid,
            values: vec![Complex64::new(0.0, 0.0); 3],
            sigma_n_sq: 0.0,
            theta,
        };
        assert_eq!(ks_statistic(&p), 0.0);
        assert_eq!(cvm_statistic(&p), 0.0);
        p.values = vec![Complex64::new(3.0, 4.0), Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        assert_eq!(ks_statistic(&p), 5.0);
        let c = Complex64::new(0.6, -0.8) * 2.0;
        p.values = vec![c; 3];
        assert_relative_eq!(cvm_statistic(&p), 2.0 * c.norm_sqr(), epsilon = 1e-14);
    }

    #[test]
    fn sigma_without_error_and_zero_mean() {
        let s = tiny_sample();
        let theta = MeanModel::new(MeanFamily::Constant, vec![0.0]).unwrap();
        let d = Deconvolution::new(Bandwidth::new(0.5).unwrap(), ErrorCf::none());
        let expected = s.y().iter().map(|y| y * y).sum::<f64>() / s.len() as f64;
        assert_relative_eq!(d.sigma_n_sq(&s, &theta).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn plug_in_zero_at_origin() {
        let s = tiny_sample();
        let theta = MeanModel::new(MeanFamily::Linear, vec![0.3, 0.9]).unwrap();
        let d = Deconvolution::new(Bandwidth::new(0.7).unwrap(), ErrorCf::laplace(1.0 / 3.0).unwrap());
        let p = d.test_process(&s, &theta, &FrequencyGrid::default()).unwrap();
        let z = p.values[p.grid.zero_index().unwrap()];
        assert!(z.norm() < 1e-10, "{z}");
    }

    #[test]
    fn conjugate_symmetry_on_symmetric_grid() {
        let s = tiny_sample();
        let theta = MeanModel::new(MeanFamily::Linear, vec![0.3, 0.9]).unwrap();
        for cf in [ErrorCf::laplace(1.0 / 3.0).unwrap(), ErrorCf::gaussian(1.0 / 3.0).unwrap()] {
            let d = Deconvolution::new(Bandwidth::new(0.7).unwrap(), cf);
            let p = d.test_process(&s, &theta, &FrequencyGrid::default()).unwrap();
            let n = p.values.len();
            for j in 0..n {
                let a = p.values[j];
                let b = p.values[n - 1 - j].conj();
                assert!((a - b).norm() <= 1e-8 * (1.0 + a.norm()));
            }
        }
    }

    #[test]
    fn localization_without_error() {
        let s = Sample::new(vec![2.0; 5], vec![1.0; 5], None).unwrap();
        let theta = MeanModel::new(MeanFamily::Constant, vec![0.0]).unwrap();
        let d = Deconvolution::new(Bandwidth::new(0.01).unwrap(), ErrorCf::none());
        let grid = FrequencyGrid::uniform(-1.0, 1.0, 9).unwrap();
        let p = d.empirical_process(&s, &theta, 0.0, &grid).unwrap();
        for (&xi, v) in grid.points().iter().zip(&p.values) {
            let expected = Complex64::from_polar(4.0, xi) * (s.len() as f64).sqrt();
            assert!((v - expected).norm() < 1e-3, "{xi}: {v} vs {expected}");
        }
    }

    #[test]
    fn closed_form_matches_quadrature_on_tiny_sample() {
        let s = tiny_sample();
        let theta = MeanModel::new(MeanFamily::Linear, vec![0.3, 0.9]).unwrap();
        let grid = FrequencyGrid::uniform(-1.0, 1.0, 5).unwrap();
        let base = Deconvolution::new(Bandwidth::new(0.8).unwrap(), ErrorCf::laplace(1.0 / 3.0).unwrap());
        let fast = base.clone().with_path(EvaluationPath::ClosedForm);
        let slow = base.with_path(EvaluationPath::Quadrature);
        let s_fast = fast.sigma_n_sq(&s, &theta).unwrap();
        let s_slow = slow.sigma_n_sq(&s, &theta).unwrap();
        assert_relative_eq!(s_fast, s_slow, max_relative = 1e-6);
        let pf = fast.empirical_process(&s, &theta, s_fast, &grid).unwrap();
        let ps = slow.empirical_process(&s, &theta, s_fast, &grid).unwrap();
        let scale = pf.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        for (a, b) in pf.values.iter().zip(&ps.values) {
            assert!((a - b).norm() <= 1e-6 * scale.max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn quadratic_mean_takes_the_quadrature_path() {
        let s = tiny_sample();
        let theta = MeanModel::new(MeanFamily::Quadratic, vec![0.3, 0.9, -0.2]).unwrap();
        let d = Deconvolution::new(Bandwidth::new(0.8).unwrap(), ErrorCf::laplace(1.0 / 3.0).unwrap());
        assert!(!d.use_closed_form(&theta, &[0.0]).unwrap());
        let p = d.test_process(&s, &theta, &FrequencyGrid::uniform(-1.0, 1.0, 5).unwrap()).unwrap();
        assert!(p.values[2].norm() < 1e-8);
        let forced = d.with_path(EvaluationPath::ClosedForm);
        assert!(forced.sigma_n_sq(&s, &theta).is_err());
    }
}
