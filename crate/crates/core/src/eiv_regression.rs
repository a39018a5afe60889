//! Corrected least squares for polynomial means with a mismeasured
//! covariate.
//!
//! Each power `W^k` is replaced by a polynomial `t_k(W)` with
//! `E[t_k(W) | X] = X^k`, built from the central moments of the error.
//! The normal equations then use these unbiased moments in place of the
//! contaminated ones.

use crate::error::{Error, Result};
use crate::error_cf::ReplicateSet;
use crate::sample::Sample;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeanFamily {
    Constant,
    Linear,
    Quadratic,
}

impl MeanFamily {
    pub fn degree(self) -> usize {
        match self {
            MeanFamily::Constant => 0,
            MeanFamily::Linear => 1,
            MeanFamily::Quadratic => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeanFamily::Constant => "constant",
            MeanFamily::Linear => "linear",
            MeanFamily::Quadratic => "quadratic",
        }
    }
}

impl std::str::FromStr for MeanFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(MeanFamily::Constant),
            "linear" => Ok(MeanFamily::Linear),
            "quadratic" => Ok(MeanFamily::Quadratic),
            other => Err(Error::Config(format!("unknown mean family `{other}`"))),
        }
    }
}

/// Fitted polynomial mean `g(x) = theta[0] + theta[1] x + ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    family: MeanFamily,
    theta: Vec<f64>,
}

impl MeanModel {
    pub fn new(family: MeanFamily, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != family.degree() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} mean needs {} coefficients, got {}",
                family.name(),
                family.degree() + 1,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean coefficient".into()));
        }
        Ok(MeanModel { family, theta })
    }

    pub fn family(&self) -> MeanFamily {
        self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.theta.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    /// Intercept and slope when the mean is at most linear.
    pub(crate) fn affine(&self) -> Option<(f64, f64)> {
        match self.family {
            MeanFamily::Constant => Some((self.theta[0], 0.0)),
            MeanFamily::Linear => Some((self.theta[0], self.theta[1])),
            MeanFamily::Quadratic => None,
        }
    }
}

/// Central moments of the measurement error used for the correction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionMoments {
    /// Error variance.
    pub m2: f64,
    /// Fourth central moment; only the quadratic family needs it.
    pub m4: Option<f64>,
}

impl CorrectionMoments {
    /// No correction: ordinary least squares.
    pub fn none() -> Self {
        CorrectionMoments { m2: 0.0, m4: Some(0.0) }
    }

    pub fn variance_only(m2: f64) -> Self {
        CorrectionMoments { m2, m4: None }
    }

    pub fn gaussian(variance: f64) -> Self {
        CorrectionMoments {
            m2: variance,
            m4: Some(3.0 * variance * variance),
        }
    }

    pub fn laplace(variance: f64) -> Self {
        CorrectionMoments {
            m2: variance,
            m4: Some(6.0 * variance * variance),
        }
    }

    /// Moments of `e` recovered from differences `e - e'` of i.i.d. pairs:
    /// `E d^2 = 2 m2`, `E d^4 = 2 m4 + 6 m2^2`.
    pub fn from_replicates(reps: &ReplicateSet) -> Self {
        let n = reps.len() as f64;
        let m2 = sigma_eps_from_replicates(reps);
        let d4 = reps.diffs().iter().map(|d| d.powi(4)).sum::<f64>() / n;
        CorrectionMoments {
            m2,
            m4: Some(((d4 - 6.0 * m2 * m2) / 2.0).max(0.0)),
        }
    }
}

/// `(1/(2n)) sum d_i^2`, the error variance implied by replicate differences.
pub fn sigma_eps_from_replicates(reps: &ReplicateSet) -> f64 {
    reps.diffs().iter().map(|d| d * d).sum::<f64>() / (2.0 * reps.len() as f64)
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// Corrected least squares fit of a polynomial mean of the given family.
pub fn fit_corrected_ls(sample: &Sample, family: MeanFamily, moments: &CorrectionMoments) -> Result<MeanModel> {
    let n = sample.len();
    if n <= family.degree() + 1 {
        return Err(Error::InvalidSample(format!("{n} observations are too few for a {} fit", family.name())));
    }
    if !(moments.m2 >= 0.0 && moments.m2.is_finite()) {
        return Err(Error::InvalidArgument(format!("error variance {} must be >= 0", moments.m2)));
    }
    let y = sample.y();
    let w = sample.w();
    let y_bar = mean(y.iter().copied(), n);
    match family {
        MeanFamily::Constant => MeanModel::new(family, vec![y_bar]),
        MeanFamily::Linear => {
            let w_bar = mean(w.iter().copied(), n);
            let s_ww = mean(w.iter().map(|&x| (x - w_bar) * (x - w_bar)), n);
            let s_wy = mean(w.iter().zip(y).map(|(&x, &v)| (x - w_bar) * (v - y_bar)), n);
            let denom = s_ww - moments.m2;
            if !(denom > 0.0) {
                return Err(Error::NonInvertibleCorrectedMoments);
            }
            let slope = s_wy / denom;
            MeanModel::new(family, vec![y_bar - slope * w_bar, slope])
        }
        MeanFamily::Quadratic => fit_quadratic(sample, moments),
    }
}

fn fit_quadratic(sample: &Sample, moments: &CorrectionMoments) -> Result<MeanModel> {
    let m2 = moments.m2;
    let m4 = moments.m4.ok_or_else(|| {
        Error::InvalidArgument("quadratic correction needs the error's fourth moment".into())
    })?;
    let n = sample.len();
    let c = mean(sample.w().iter().copied(), n);
    // Corrected powers of the centred covariate.
    let mut t = [0.0f64; 5];
    let mut ty = [0.0f64; 3];
    for (&w, &y) in sample.w().iter().zip(sample.y()) {
        let z = w - c;
        let z2 = z * z;
        let tk = [
            1.0,
            z,
            z2 - m2,
            z2 * z - 3.0 * m2 * z,
            z2 * z2 - 6.0 * m2 * z2 + 6.0 * m2 * m2 - m4,
        ];
        for k in 0..5 {
            t[k] += tk[k];
        }
        for k in 0..3 {
            ty[k] += tk[k] * y;
        }
    }
    let nf = n as f64;
    let mut a = [[0.0; 3]; 3];
    for (j, row) in a.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = t[j + k] / nf;
        }
    }
    let rhs = [ty[0] / nf, ty[1] / nf, ty[2] / nf];
    let beta = solve_spd3(a, rhs).ok_or(Error::NonInvertibleCorrectedMoments)?;
    let theta = vec![
        beta[0] - beta[1] * c + beta[2] * c * c,
        beta[1] - 2.0 * beta[2] * c,
        beta[2],
    ];
    MeanModel::new(MeanFamily::Quadratic, theta)
}

/// Cholesky solve of a 3x3 system; `None` unless the matrix is positive definite.
fn solve_spd3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let mut l = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 1e-12 * a[i][i].abs().max(1.0)) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = [0.0; 3];
    for i in 0..3 {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        x[i] = (z[i] - (i + 1..3).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}
