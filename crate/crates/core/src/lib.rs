//! Heteroskedasticity tests for regressions whose scalar covariate is
//! observed with additive measurement error.
//!
//! The test statistic is built from a deconvolution-kernel weighted,
//! residual-marked empirical process evaluated on a grid of frequencies and
//! reduced to Kolmogorov-Smirnov and Cramer-von Mises statistics. Critical
//! values come from a multiplier bootstrap.

pub mod error;
pub mod kernels;
pub mod error_cf;
pub mod sample;
pub mod eiv_regression;
pub mod process;
pub mod bootstrap;
pub mod seed;
pub mod pipeline;
pub mod simulation;
pub mod io;

pub use bootstrap::{run_bootstrap, BootstrapConfig, BootstrapOutcome, UnknownWeighting};
pub use eiv_regression::{fit_corrected_ls, CorrectionMoments, MeanFamily, MeanModel};
pub use error::{Error, Result};
pub use error_cf::{ErrorCf, ReplicateSet};
pub use pipeline::{analyze, Analysis, BandwidthChoice, ErrorCase, ErrorSpec, KnownLaw, TestConfig};
pub use kernels::{Bandwidth, DeconKernel, KernelSpec, QuadratureConfig};
pub use process::{Deconvolution, EvaluationPath, FrequencyGrid, TestProcess, TestStatistics};
pub use sample::Sample;
