//! Multiplier bootstrap critical values.
//!
//! Known error law: every observation's term is multiplied by a Mammen
//! two-point weight and the weight function `exp(i x xi)` is centred by
//! its sample mean `G_n(xi)`. Since the centring is linear this reduces to
//!
//! ```text
//! S*(xi) - G_n(xi) S*(0),    S*(xi) = (1/n) sum V_i term_i(xi)
//! ```
//!
//! Estimated error law: the replicate-based CF is perturbed with
//! unit-mean exponential weights, the variance and process are recomputed
//! with the perturbed kernel, and replicates are centred by their
//! across-replicate mean before reduction.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;

use crate::eiv_regression::MeanModel;
use crate::error::{Error, Result};
use crate::error_cf::{ErrorCf, ReplicateSet};
use crate::process::{
    integrated_square, sup_modulus, with_zero, Deconvolution, EvaluationPath, FrequencyGrid, ObservationTerms, PhaseTable,
    TestProcess, TestStatistics,
};
use crate::sample::Sample;
use crate::seed::{derive_seed, fold_seed, rng};

/// Perturbed-CF replicates that hit the floor are redrawn at most this
/// many times.
pub const MAX_REDRAWS: usize = 10;

const SQRT5: f64 = 2.236_067_977_499_79;
pub const MAMMEN_LOW: f64 = (1.0 - SQRT5) / 2.0;
pub const MAMMEN_HIGH: f64 = (1.0 + SQRT5) / 2.0;
/// Probability of `MAMMEN_LOW`.
pub const MAMMEN_P_LOW: f64 = (SQRT5 + 1.0) / (2.0 * SQRT5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiplierKind {
    /// Mean 0, variance 1, two support points.
    MammenTwoPoint,
    /// Mean 1, variance 1.
    StdExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplierScheme {
    pub kind: MultiplierKind,
    pub seed: u64,
}

impl MultiplierScheme {
    pub fn mammen(seed: u64) -> Self {
        MultiplierScheme {
            kind: MultiplierKind::MammenTwoPoint,
            seed,
        }
    }

    pub fn exponential(seed: u64) -> Self {
        MultiplierScheme {
            kind: MultiplierKind::StdExponential,
            seed,
        }
    }
}

pub fn draw_multipliers(scheme: MultiplierScheme, n: usize) -> Vec<f64> {
    let mut r = rng(scheme.seed);
    match scheme.kind {
        MultiplierKind::MammenTwoPoint => (0..n)
            .map(|_| if r.random::<f64>() < MAMMEN_P_LOW { MAMMEN_LOW } else { MAMMEN_HIGH })
            .collect(),
        MultiplierKind::StdExponential => (0..n).map(|_| Exp1.sample(&mut r)).collect(),
    }
}

/// Which parts of the estimated-CF statistic the exponential multipliers
/// perturb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownWeighting {
    /// Only the replicate-based CF estimate is perturbed; the observation
    /// sums are left unweighted.
    CfOnly,
    /// Unit `i` (its observation term and its replicate difference) is
    /// weighted by `V*_i / mean(V*)`, so the CF estimate, the variance and
    /// the process are all recomputed under the same weights.
    #[default]
    CfAndObservations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub weighting: UnknownWeighting,
}

impl BootstrapConfig {
    pub fn new(replicates: usize, alphas: Vec<f64>, seed: u64) -> Self {
        BootstrapConfig {
            replicates,
            alphas,
            seed,
            weighting: UnknownWeighting::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("no significance level given".into()));
        }
        for &a in &self.alphas {
            critical_index(self.replicates, a)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticalValues {
    pub alpha: f64,
    pub ks: f64,
    pub cvm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    pub observed: TestStatistics,
    pub ks_reps: Vec<f64>,
    pub cvm_reps: Vec<f64>,
    pub critical: Vec<CriticalValues>,
    pub ks_pvalue: f64,
    pub cvm_pvalue: f64,
    /// Perturbed-CF draws rejected for hitting the floor.
    pub redraws: usize,
}

impl BootstrapOutcome {
    /// `(ks rejects, cvm rejects)` at a level that was requested.
    pub fn decision(&self, alpha: f64) -> Option<(bool, bool)> {
        self.critical
            .iter()
            .find(|c| c.alpha == alpha)
            .map(|c| (self.observed.ks > c.ks, self.observed.cvm > c.cvm))
    }
}

/// One-based rank of the critical value among `b` ascending replicates:
/// `ceil(b (1 - alpha))`.
pub fn critical_index(b: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 0.5), got {alpha}")));
    }
    if (b as f64) < 1.0 / alpha - 1.0 - 1e-9 {
        return Err(Error::InsufficientReplicates { replicates: b, alpha });
    }
    let k = (b as f64 * (1.0 - alpha) - 1e-9).ceil() as usize;
    Ok(k.clamp(1, b))
}

pub fn critical_value(reps: &[f64], alpha: f64) -> Result<f64> {
    let k = critical_index(reps.len(), alpha)?;
    let mut sorted = reps.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[k - 1])
}

/// Share of replicates at least as large as `observed`.
pub fn p_value(reps: &[f64], observed: f64) -> f64 {
    if reps.is_empty() {
        return f64::NAN;
    }
    reps.iter().filter(|&&r| r >= observed).count() as f64 / reps.len() as f64
}

/// `G_n(xi) = kft(b xi)/fe(xi) (1/n) sum exp(i W_i xi)`.
pub fn g_n(grid: &FrequencyGrid, sample: &Sample, decon: &Deconvolution) -> Result<Vec<Complex64>> {
    let mult = decon.multipliers(grid.points())?;
    let n = sample.len() as f64;
    Ok(grid
        .points()
        .iter()
        .zip(&mult)
        .map(|(&xi, m)| {
            let ecf: Complex64 = sample.w().iter().map(|&w| Complex64::from_polar(1.0, w * xi)).sum();
            ecf / n * m[0]
        })
        .collect())
}

/// Centred multiplier process from precomputed terms; index 0 of `terms`
/// is `xi = 0`.
fn known_from_terms(terms: &ObservationTerms, g: &[Complex64], sigma_sq: f64, v: &[f64]) -> Vec<Complex64> {
    let (marks, weights) = terms.averages(Some(v));
    let root_n = (v.len() as f64).sqrt();
    let s: Vec<Complex64> = marks.iter().zip(&weights).map(|(m, w)| m - w * sigma_sq).collect();
    s[1..]
        .iter()
        .zip(&g[1..])
        .map(|(sx, gx)| (sx - gx * s[0]) * root_n)
        .collect()
}

/// `sqrt(n) (S*(xi) - G_n(xi) S*(0))` for one set of multipliers.
pub fn bootstrap_process_known(
    sample: &Sample,
    theta: &MeanModel,
    sigma_n_sq: f64,
    decon: &Deconvolution,
    grid: &FrequencyGrid,
    multipliers: &[f64],
) -> Result<Vec<Complex64>> {
    check_len(sample, multipliers)?;
    let terms = decon.observation_terms(sample, theta, &with_zero(grid))?;
    let (_, g) = terms.averages(None);
    Ok(known_from_terms(&terms, &g, sigma_n_sq, multipliers))
}

fn check_len(sample: &Sample, v: &[f64]) -> Result<()> {
    if v.len() != sample.len() {
        return Err(Error::LengthMismatch {
            expected: sample.len(),
            got: v.len(),
        });
    }
    Ok(())
}

fn estimated_parts(cf: &ErrorCf) -> Result<(Arc<ReplicateSet>, f64)> {
    match cf {
        ErrorCf::Estimated { reps, floor } | ErrorCf::PerturbedEstimated { reps, floor, .. } => {
            Ok((reps.clone(), *floor))
        }
        _ => Err(Error::InvalidArgument("perturbed bootstrap needs an estimated error CF".into())),
    }
}

/// Data shared by every perturbed-CF replicate.
struct UnknownContext<'a> {
    sample: &'a Sample,
    theta: &'a MeanModel,
    decon: &'a Deconvolution,
    points: Vec<f64>,
    reps: Arc<ReplicateSet>,
    floor: f64,
    weighting: UnknownWeighting,
    phases: Option<(PhaseTable, Vec<[Complex64; 3]>)>,
}

impl<'a> UnknownContext<'a> {
    fn new(
        sample: &'a Sample,
        theta: &'a MeanModel,
        decon: &'a Deconvolution,
        grid: &FrequencyGrid,
        weighting: UnknownWeighting,
    ) -> Result<Self> {
        let (reps, floor) = estimated_parts(&decon.cf)?;
        if reps.len() != sample.len() {
            return Err(Error::LengthMismatch {
                expected: sample.len(),
                got: reps.len(),
            });
        }
        let points = with_zero(grid);
        let phases = if theta.affine().is_some() && decon.path != EvaluationPath::Quadrature {
            let table = PhaseTable::new(sample, theta, &points)?;
            let sums = table.column_sums(None);
            Some((table, sums))
        } else {
            None
        };
        Ok(UnknownContext {
            sample,
            theta,
            decon,
            points,
            reps,
            floor,
            weighting,
            phases,
        })
    }

    /// Raw `sqrt(n) S*(xi)` on the grid for one multiplier draw.
    fn replicate(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        let (cf_weights, obs_weights) = match self.weighting {
            UnknownWeighting::CfOnly => (v.to_vec(), None),
            UnknownWeighting::CfAndObservations => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                let w: Vec<f64> = v.iter().map(|x| x / mean).collect();
                (w.clone(), Some(w))
            }
        };
        let cf = ErrorCf::perturbed(self.reps.clone(), cf_weights, self.floor)?;
        let d = self.decon.with_cf(cf);
        let n = self.sample.len() as f64;
        let (marks, weights) = match &self.phases {
            Some((table, base)) => {
                let mult = d.multipliers(&self.points)?;
                let (m, w) = match &obs_weights {
                    None => table.combine(base, &mult),
                    Some(ow) => table.combine(&table.column_sums(Some(ow)), &mult),
                };
                (m.into_iter().map(|z| z / n).collect::<Vec<_>>(), w.into_iter().map(|z| z / n).collect::<Vec<_>>())
            }
            None => d
                .observation_terms(self.sample, self.theta, &self.points)?
                .averages(obs_weights.as_deref()),
        };
        let sigma_sq = marks[0].re;
        let root_n = n.sqrt();
        Ok(marks[1..]
            .iter()
            .zip(&weights[1..])
            .map(|(m, w)| (m - w * sigma_sq) * root_n)
            .collect())
    }

    /// Draws until the perturbed CF clears the floor; returns the process
    /// and the number of rejected draws.
    fn replicate_with_redraws(&self, seed: u64, index: usize) -> Result<(Vec<Complex64>, usize)> {
        for attempt in 0..=MAX_REDRAWS {
            let s = if attempt == 0 {
                derive_seed(seed, index as u64)
            } else {
                fold_seed(seed, &[index as u64, attempt as u64])
            };
            let v = draw_multipliers(MultiplierScheme::exponential(s), self.sample.len());
            match self.replicate(&v) {
                Ok(p) => return Ok((p, attempt)),
                Err(e) if matches!(e.root(), Error::DegenerateCf { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(Error::PerturbationFailed {
            attempts: MAX_REDRAWS + 1,
        })
    }
}

/// Raw (uncentred) `sqrt(n) S*(xi)` with the CF perturbed by exponential
/// multipliers `v`.
pub fn bootstrap_process_unknown(
    sample: &Sample,
    theta: &MeanModel,
    decon: &Deconvolution,
    grid: &FrequencyGrid,
    multipliers: &[f64],
    weighting: UnknownWeighting,
) -> Result<Vec<Complex64>> {
    check_len(sample, multipliers)?;
    UnknownContext::new(sample, theta, decon, grid, weighting)?.replicate(multipliers)
}

/// Subtract the across-replicate mean at every frequency.
pub fn center_replicates(reps: &mut [Vec<Complex64>]) {
    let Some(first) = reps.first() else { return };
    let m = first.len();
    let b = reps.len() as f64;
    let mean: Vec<Complex64> = (0..m).map(|j| reps.iter().map(|r| r[j]).sum::<Complex64>() / b).collect();
    for r in reps.iter_mut() {
        for (x, mu) in r.iter_mut().zip(&mean) {
            *x -= mu;
        }
    }
}

/// Bootstrap replicates of the process for the statistic in `process`,
/// reduced to KS and CvM, with critical values and p-values.
pub fn run_bootstrap(
    sample: &Sample,
    process: &TestProcess,
    decon: &Deconvolution,
    cfg: &BootstrapConfig,
) -> Result<BootstrapOutcome> {
    cfg.validate()?;
    let grid = &process.grid;
    let theta = &process.theta;
    let (paths, redraws) = if decon.cf.is_estimated() {
        let ctx = UnknownContext::new(sample, theta, decon, grid, cfg.weighting)?;
        let draws = (0..cfg.replicates)
            .into_par_iter()
            .map(|b| ctx.replicate_with_redraws(cfg.seed, b))
            .collect::<Result<Vec<_>>>()?;
        let redraws = draws.iter().map(|d| d.1).sum();
        let mut paths: Vec<Vec<Complex64>> = draws.into_iter().map(|d| d.0).collect();
        center_replicates(&mut paths);
        (paths, redraws)
    } else {
        let terms = decon.observation_terms(sample, theta, &with_zero(grid))?;
        let (_, g) = terms.averages(None);
        let paths = (0..cfg.replicates)
            .into_par_iter()
            .map(|b| {
                let v = draw_multipliers(MultiplierScheme::mammen(derive_seed(cfg.seed, b as u64)), sample.len());
                known_from_terms(&terms, &g, process.sigma_n_sq, &v)
            })
            .collect::<Vec<_>>();
        (paths, 0)
    };
    let ks_reps: Vec<f64> = paths.iter().map(|p| sup_modulus(p)).collect();
    let cvm_reps: Vec<f64> = paths.iter().map(|p| integrated_square(grid.points(), p)).collect();
    let observed = TestStatistics::of(process);
    let critical = cfg
        .alphas
        .iter()
        .map(|&alpha| {
            Ok(CriticalValues {
                alpha,
                ks: critical_value(&ks_reps, alpha)?,
                cvm: critical_value(&cvm_reps, alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapOutcome {
        observed,
        ks_pvalue: p_value(&ks_reps, observed.ks),
        cvm_pvalue: p_value(&cvm_reps, observed.cvm),
        ks_reps,
        cvm_reps,
        critical,
        redraws,
    })
}

/// Analytic mean and variance of the Mammen weight.
pub fn mammen_moments() -> (f64, f64) {
    let p = MAMMEN_P_LOW;
    let mean = p * MAMMEN_LOW + (1.0 - p) * MAMMEN_HIGH;
    let second = p * MAMMEN_LOW * MAMMEN_LOW + (1.0 - p) * MAMMEN_HIGH * MAMMEN_HIGH;
    (mean, second - mean * mean)
}
