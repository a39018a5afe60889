//! End-to-end test on one data set: correction, fit, bandwidth, process,
//! statistics and bootstrap.

use std::fmt;
use std::str::FromStr;

use crate::bootstrap::{run_bootstrap, BootstrapConfig, BootstrapOutcome};
use crate::eiv_regression::{fit_corrected_ls, sigma_eps_from_replicates, CorrectionMoments, MeanFamily, MeanModel};
use crate::error::{Error, Result};
use crate::error_cf::{ErrorCf, DEFAULT_FLOOR};
use crate::kernels::Bandwidth;
use crate::process::{Deconvolution, FrequencyGrid, TestProcess};
use crate::sample::Sample;

/// Smoothness class of the error law; selects the bandwidth rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCase {
    /// Polynomially decaying CF (Laplace).
    OrdinarySmooth,
    /// Exponentially decaying CF (Gaussian).
    Supersmooth,
}

impl ErrorCase {
    pub fn name(self) -> &'static str {
        match self {
            ErrorCase::OrdinarySmooth => "ordinary",
            ErrorCase::Supersmooth => "supersmooth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnownLaw {
    Laplace,
    Gaussian,
}

impl KnownLaw {
    pub fn case(self) -> ErrorCase {
        match self {
            KnownLaw::Laplace => ErrorCase::OrdinarySmooth,
            KnownLaw::Gaussian => ErrorCase::Supersmooth,
        }
    }
}

/// What is known about the measurement error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorSpec {
    Known { law: KnownLaw, variance: f64 },
    /// Estimated from a replicate column; `case` picks the bandwidth rule.
    Unknown { case: ErrorCase },
}

impl ErrorSpec {
    pub fn case(&self) -> ErrorCase {
        match *self {
            ErrorSpec::Known { law, .. } => law.case(),
            ErrorSpec::Unknown { case } => case,
        }
    }

    pub fn is_known(&self) -> bool {
        matches!(self, ErrorSpec::Known { .. })
    }
}

/// Accepted forms: `known:laplace:var=V`, `known:laplace:sd=S`,
/// `known:gaussian:var=V`, `known:gaussian:sd=S`, `unknown`,
/// `unknown:ordinary`, `unknown:supersmooth`.
impl FromStr for ErrorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised error spec '{s}'"));
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["unknown"] | ["unknown", "ordinary"] => Ok(ErrorSpec::Unknown {
                case: ErrorCase::OrdinarySmooth,
            }),
            ["unknown", "supersmooth"] => Ok(ErrorSpec::Unknown {
                case: ErrorCase::Supersmooth,
            }),
            ["known", law, param] => {
                let law = match *law {
                    "laplace" => KnownLaw::Laplace,
                    "gaussian" => KnownLaw::Gaussian,
                    _ => return Err(bad()),
                };
                let (key, value) = param.split_once('=').ok_or_else(bad)?;
                let value: f64 = value.parse().map_err(|_| bad())?;
                if !(value > 0.0 && value.is_finite()) {
                    return Err(Error::Config(format!("error scale must be positive, got {value}")));
                }
                let variance = match key {
                    "var" => value,
                    "sd" => value * value,
                    _ => return Err(bad()),
                };
                Ok(ErrorSpec::Known { law, variance })
            }
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ErrorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErrorSpec::Known { law, variance } => {
                let name = match law {
                    KnownLaw::Laplace => "laplace",
                    KnownLaw::Gaussian => "gaussian",
                };
                write!(f, "known:{name}:var={variance}")
            }
            ErrorSpec::Unknown { case } => write!(f, "unknown:{}", case.name()),
        }
    }
}

/// `c (5 s^4 / n)^(1/27)` (ordinary smooth) or `c (4 s^2 / ln n)^(1/2)`
/// (supersmooth), with `s^2` the error variance.
pub fn rule_of_thumb_bandwidth(case: ErrorCase, n: usize, sigma_eps_sq: f64, c: f64) -> Result<Bandwidth> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("bandwidth rule needs n >= 2, got {n}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("bandwidth constant must be positive, got {c}")));
    }
    if !(sigma_eps_sq > 0.0 && sigma_eps_sq.is_finite()) {
        return Err(Error::NonPositiveVariance(sigma_eps_sq));
    }
    let n = n as f64;
    let b = match case {
        ErrorCase::OrdinarySmooth => c * (5.0 * sigma_eps_sq * sigma_eps_sq / n).powf(1.0 / 27.0),
        ErrorCase::Supersmooth => c * (4.0 * sigma_eps_sq / n.ln()).sqrt(),
    };
    Bandwidth::new(b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthChoice {
    RuleOfThumb { c: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub error: ErrorSpec,
    pub family: MeanFamily,
    pub bandwidth: BandwidthChoice,
    pub grid: FrequencyGrid,
    /// When set, frequencies are clipped to `|xi| <= limit / b` so that
    /// `b xi` stays where the kernel transform is flat to ~1e-11.
    pub taper_limit: Option<f64>,
    pub bootstrap: BootstrapConfig,
    /// Lower bound applied to an estimated error CF.
    pub floor: f64,
}

impl TestConfig {
    pub fn new(error: ErrorSpec, family: MeanFamily, bootstrap: BootstrapConfig) -> Self {
        TestConfig {
            error,
            family,
            bandwidth: BandwidthChoice::RuleOfThumb { c: 1.0 },
            grid: FrequencyGrid::default(),
            taper_limit: Some(DEFAULT_TAPER_LIMIT),
            bootstrap,
            floor: DEFAULT_FLOOR,
        }
    }
}

/// Default bound on `b |xi|`. The flat-top transform satisfies
/// `|1 - kft(t)| < 3e-11` and `|kft''(t)| < 2e-6` for `|t| <= 0.25`.
pub const DEFAULT_TAPER_LIMIT: f64 = 0.25;

/// The grid actually used at bandwidth `b`: `grid` clipped to
/// `[-limit/b, limit/b]`, keeping the number of points.
pub fn clip_grid(grid: &FrequencyGrid, b: Bandwidth, limit: Option<f64>) -> Result<FrequencyGrid> {
    let Some(limit) = limit else {
        return Ok(grid.clone());
    };
    if !(limit > 0.0 && limit.is_finite()) {
        return Err(Error::InvalidArgument(format!("taper limit must be positive, got {limit}")));
    }
    let bound = limit / b.get();
    if grid.lo() >= -bound && grid.hi() <= bound {
        return Ok(grid.clone());
    }
    FrequencyGrid::uniform(grid.lo().max(-bound), grid.hi().min(bound), grid.len())
}

/// Everything computed for one data set.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub theta: MeanModel,
    /// Error variance used for correction and bandwidth (given or estimated).
    pub sigma_eps_sq: f64,
    pub bandwidth: Bandwidth,
    pub process: TestProcess,
    pub outcome: BootstrapOutcome,
}

/// Run the full test; errors carry the name of the stage that failed.
pub fn analyze(sample: &Sample, cfg: &TestConfig) -> Result<Analysis> {
    cfg.bootstrap.validate().map_err(|e| e.at("config"))?;
    let (moments, cf, sigma_eps_sq) = match cfg.error {
        ErrorSpec::Known { law, variance } => match law {
            KnownLaw::Laplace => (
                CorrectionMoments::laplace(variance),
                ErrorCf::laplace(variance).map_err(|e| e.at("error law"))?,
                variance,
            ),
            KnownLaw::Gaussian => (
                CorrectionMoments::gaussian(variance),
                ErrorCf::gaussian(variance).map_err(|e| e.at("error law"))?,
                variance,
            ),
        },
        ErrorSpec::Unknown { .. } => {
            let reps = sample
                .replicates()
                .ok_or(Error::EmptyReplicates)
                .and_then(|r| r)
                .map_err(|e| e.at("replicates"))?;
            let s2 = sigma_eps_from_replicates(&reps);
            let cf = ErrorCf::estimated(reps.clone(), cfg.floor).map_err(|e| e.at("error law"))?;
            (CorrectionMoments::from_replicates(&reps), cf, s2)
        }
    };
    let theta = fit_corrected_ls(sample, cfg.family, &moments).map_err(|e| e.at("fit"))?;
    let bandwidth = match cfg.bandwidth {
        BandwidthChoice::Fixed(b) => Bandwidth::new(b),
        BandwidthChoice::RuleOfThumb { c } => rule_of_thumb_bandwidth(cfg.error.case(), sample.len(), sigma_eps_sq, c),
    }
    .map_err(|e| e.at("bandwidth"))?;
    let grid = clip_grid(&cfg.grid, bandwidth, cfg.taper_limit).map_err(|e| e.at("grid"))?;
    let decon = Deconvolution::new(bandwidth, cf);
    let sigma_sq = decon.sigma_n_sq(sample, &theta).map_err(|e| e.at("variance"))?;
    let process = decon
        .empirical_process(sample, &theta, sigma_sq, &grid)
        .map_err(|e| e.at("process"))?;
    let outcome = run_bootstrap(sample, &process, &decon, &cfg.bootstrap).map_err(|e| e.at("bootstrap"))?;
    Ok(Analysis {
        theta,
        sigma_eps_sq,
        bandwidth,
        process,
        outcome,
    })
}
