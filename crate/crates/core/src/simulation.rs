//! Monte Carlo size and power studies.
//!
//! Designs: `X, U ~ N(0, 1)`, `Y = g(X) + s(X) U`, `W = X + e` with `e`
//! Laplace or Gaussian of variance 1/3 (signal-to-noise 3), and optionally a
//! replicate `W' = X + e'`. The conditional variance `s^2(X)` is 1 (DGP 0),
//! `1 + |cos(pi X)|^2` (DGP 1) or `1 + exp|X|` (DGP 2).

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::time::Instant;

use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;

use crate::bootstrap::{BootstrapConfig, UnknownWeighting};
use crate::eiv_regression::MeanFamily;
use crate::error::{Error, Result};
use crate::pipeline::{analyze, BandwidthChoice, ErrorCase, ErrorSpec, KnownLaw, TestConfig, DEFAULT_TAPER_LIMIT};
use crate::process::FrequencyGrid;
use crate::sample::Sample;
use crate::seed::{derive_seed, fold_seed, rng};

/// Variance of the simulated measurement error.
pub const ERROR_VARIANCE: f64 = 1.0 / 3.0;

/// Smallest simulated sample.
pub const MIN_N: usize = 50;

pub const CSV_HEADER: &str = "model,case,dgp,n,c,alpha,stat,rate,reps,B,seed";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    /// `g(x) = 1 + x`
    Linear,
    /// `g(x) = 1`
    Constant,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Linear => "model1",
            Model::Constant => "model2",
        }
    }

    pub fn family(self) -> MeanFamily {
        match self {
            Model::Linear => MeanFamily::Linear,
            Model::Constant => MeanFamily::Constant,
        }
    }

    pub fn mean(self, x: f64) -> f64 {
        match self {
            Model::Linear => 1.0 + x,
            Model::Constant => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dgp {
    D0,
    D1,
    D2,
}

impl Dgp {
    pub fn index(self) -> u64 {
        match self {
            Dgp::D0 => 0,
            Dgp::D1 => 1,
            Dgp::D2 => 2,
        }
    }

    pub fn from_index(i: u64) -> Option<Dgp> {
        match i {
            0 => Some(Dgp::D0),
            1 => Some(Dgp::D1),
            2 => Some(Dgp::D2),
            _ => None,
        }
    }

    /// Conditional variance of `Y` given `X = x`.
    pub fn variance(self, x: f64) -> f64 {
        match self {
            Dgp::D0 => 1.0,
            Dgp::D1 => 1.0 + (PI * x).cos().powi(2),
            Dgp::D2 => 1.0 + x.abs().exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub model: Model,
    pub dgp: Dgp,
    pub n: usize,
    pub error_case: ErrorCase,
    pub with_replicates: bool,
}

fn error_draw(case: ErrorCase, r: &mut impl rand::Rng) -> f64 {
    match case {
        ErrorCase::OrdinarySmooth => {
            let a: f64 = Exp1.sample(r);
            let b: f64 = Exp1.sample(r);
            (ERROR_VARIANCE / 2.0).sqrt() * (a - b)
        }
        ErrorCase::Supersmooth => {
            let z: f64 = StandardNormal.sample(r);
            ERROR_VARIANCE.sqrt() * z
        }
    }
}

/// Simulated sample; the latent covariate is discarded.
pub fn generate(spec: &DgpSpec, seed: u64) -> Result<Sample> {
    generate_with_latent(spec, seed).map(|(s, _)| s)
}

/// Simulated sample together with the latent covariate `X`.
pub fn generate_with_latent(spec: &DgpSpec, seed: u64) -> Result<(Sample, Vec<f64>)> {
    if spec.n < MIN_N {
        return Err(Error::InvalidArgument(format!("simulated n must be at least {MIN_N}, got {}", spec.n)));
    }
    let mut r = rng(seed);
    let n = spec.n;
    let (mut x, mut y, mut w) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    let mut w_rep = spec.with_replicates.then(|| Vec::with_capacity(n));
    for _ in 0..n {
        let xi: f64 = StandardNormal.sample(&mut r);
        let u: f64 = StandardNormal.sample(&mut r);
        y.push(spec.model.mean(xi) + spec.dgp.variance(xi).sqrt() * u);
        w.push(xi + error_draw(spec.error_case, &mut r));
        if let Some(rep) = w_rep.as_mut() {
            rep.push(xi + error_draw(spec.error_case, &mut r));
        }
        x.push(xi);
    }
    Ok((Sample::new(y, w, w_rep)?, x))
}

/// One design point of a study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub model: Model,
    pub dgp: Dgp,
    pub n: usize,
    pub case: ErrorCase,
    /// Whether the test is given the true error law (otherwise it uses a
    /// replicate column).
    pub known: bool,
    pub c: f64,
}

impl Cell {
    pub fn spec(&self) -> DgpSpec {
        DgpSpec {
            model: self.model,
            dgp: self.dgp,
            n: self.n,
            error_case: self.case,
            with_replicates: !self.known,
        }
    }

    pub fn case_label(&self) -> String {
        format!("{}_{}", self.case.name(), if self.known { "known" } else { "unknown" })
    }

    pub fn error_spec(&self) -> ErrorSpec {
        if self.known {
            let law = match self.case {
                ErrorCase::OrdinarySmooth => KnownLaw::Laplace,
                ErrorCase::Supersmooth => KnownLaw::Gaussian,
            };
            ErrorSpec::Known {
                law,
                variance: ERROR_VARIANCE,
            }
        } else {
            ErrorSpec::Unknown { case: self.case }
        }
    }

    /// Seed of this cell: the master seed folded with every coordinate.
    pub fn seed(&self, master: u64) -> u64 {
        let model = match self.model {
            Model::Linear => 1,
            Model::Constant => 2,
        };
        let case = match self.case {
            ErrorCase::OrdinarySmooth => 0,
            ErrorCase::Supersmooth => 1,
        };
        fold_seed(
            master,
            &[model, case, self.known as u64, self.dgp.index(), self.n as u64, self.c.to_bits()],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub reps: usize,
    pub bootstrap: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub grid: FrequencyGrid,
    pub taper_limit: Option<f64>,
    pub weighting: UnknownWeighting,
}

impl StudyConfig {
    pub fn new(reps: usize, bootstrap: usize, alphas: Vec<f64>, seed: u64) -> Self {
        StudyConfig {
            reps,
            bootstrap,
            alphas,
            seed,
            grid: FrequencyGrid::default(),
            taper_limit: Some(DEFAULT_TAPER_LIMIT),
            weighting: UnknownWeighting::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub alpha: f64,
    pub ks: f64,
    pub cvm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub cell: Cell,
    pub seed: u64,
    /// Repetitions that produced a decision.
    pub completed: usize,
    /// Repetitions that failed numerically.
    pub failed: usize,
    pub rates: Vec<Rates>,
    /// Perturbed-CF redraws summed over repetitions.
    pub redraws: usize,
    pub seconds: f64,
    /// Set when the whole cell failed.
    pub error: Option<String>,
}

impl CellOutcome {
    pub fn rate(&self, alpha: f64) -> Option<Rates> {
        self.rates.iter().copied().find(|r| r.alpha == alpha)
    }
}

struct RepResult {
    /// per alpha: (ks rejects, cvm rejects)
    decisions: Vec<(bool, bool)>,
    redraws: usize,
}

fn run_rep(cell: &Cell, cfg: &StudyConfig, seed: u64) -> Result<RepResult> {
    let sample = generate(&cell.spec(), derive_seed(seed, 0))?;
    let mut boot = BootstrapConfig::new(cfg.bootstrap, cfg.alphas.clone(), derive_seed(seed, 1));
    boot.weighting = cfg.weighting;
    let test = TestConfig {
        bandwidth: BandwidthChoice::RuleOfThumb { c: cell.c },
        grid: cfg.grid.clone(),
        taper_limit: cfg.taper_limit,
        ..TestConfig::new(cell.error_spec(), cell.model.family(), boot)
    };
    let a = analyze(&sample, &test)?;
    let decisions = cfg
        .alphas
        .iter()
        .map(|&alpha| a.outcome.decision(alpha).expect("alpha was requested"))
        .collect();
    Ok(RepResult {
        decisions,
        redraws: a.outcome.redraws,
    })
}

/// Rejection frequencies for one cell. Individual repetitions that fail
/// numerically are counted and skipped.
pub fn run_cell(cell: &Cell, cfg: &StudyConfig) -> CellOutcome {
    let start = Instant::now();
    let seed = cell.seed(cfg.seed);
    let mut out = CellOutcome {
        cell: *cell,
        seed,
        completed: 0,
        failed: 0,
        rates: Vec::new(),
        redraws: 0,
        seconds: 0.0,
        error: None,
    };
    let check = BootstrapConfig::new(cfg.bootstrap, cfg.alphas.clone(), 0).validate();
    if let Err(e) = check.and_then(|_| {
        if cell.n < MIN_N {
            Err(Error::InvalidArgument(format!("n = {} is below {MIN_N}", cell.n)))
        } else if !(cell.c > 0.0) {
            Err(Error::InvalidArgument(format!("c = {} must be positive", cell.c)))
        } else {
            Ok(())
        }
    }) {
        out.error = Some(e.to_string());
        return out;
    }
    let results: Vec<Result<RepResult>> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| run_rep(cell, cfg, derive_seed(seed, r as u64)))
        .collect();
    let mut counts = vec![(0usize, 0usize); cfg.alphas.len()];
    let mut first_error = None;
    for r in results {
        match r {
            Ok(rep) => {
                out.completed += 1;
                out.redraws += rep.redraws;
                for (c, (ks, cvm)) in counts.iter_mut().zip(rep.decisions) {
                    c.0 += ks as usize;
                    c.1 += cvm as usize;
                }
            }
            Err(e) => {
                out.failed += 1;
                first_error.get_or_insert(e.to_string());
            }
        }
    }
    if out.completed == 0 {
        out.error = Some(first_error.unwrap_or_else(|| "no repetitions requested".into()));
    } else {
        let m = out.completed as f64;
        out.rates = cfg
            .alphas
            .iter()
            .zip(&counts)
            .map(|(&alpha, &(ks, cvm))| Rates {
                alpha,
                ks: ks as f64 / m,
                cvm: cvm as f64 / m,
            })
            .collect();
    }
    out.seconds = start.elapsed().as_secs_f64();
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub config: StudyConfig,
    pub cells: Vec<CellOutcome>,
}

impl StudyResult {
    /// One row per (cell, alpha, statistic); failed cells are omitted.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for cell in &self.cells {
            for r in &cell.rates {
                for (stat, rate) in [("ks", r.ks), ("cvm", r.cvm)] {
                    w.write_record([
                        cell.cell.model.name().to_string(),
                        cell.cell.case_label(),
                        cell.cell.dgp.index().to_string(),
                        cell.cell.n.to_string(),
                        cell.cell.c.to_string(),
                        r.alpha.to_string(),
                        stat.to_string(),
                        format!("{rate:.6}"),
                        cell.completed.to_string(),
                        self.config.bootstrap.to_string(),
                        cell.seed.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.cells.iter().filter(|c| c.error.is_some())
    }
}

impl fmt::Display for StudyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<7} {:<18} {:>3} {:>5} {:>5} {:>5} {:>7} {:>7} {:>5} {:>7}",
            "model", "case", "dgp", "n", "c", "alpha", "KS", "CvM", "reps", "secs"
        )?;
        for cell in &self.cells {
            let c = &cell.cell;
            if let Some(e) = &cell.error {
                writeln!(
                    f,
                    "{:<7} {:<18} {:>3} {:>5} {:>5} FAILED: {e}",
                    c.model.name(),
                    c.case_label(),
                    c.dgp.index(),
                    c.n,
                    c.c
                )?;
                continue;
            }
            for r in &cell.rates {
                writeln!(
                    f,
                    "{:<7} {:<18} {:>3} {:>5} {:>5} {:>5} {:>7.3} {:>7.3} {:>5} {:>7.1}",
                    c.model.name(),
                    c.case_label(),
                    c.dgp.index(),
                    c.n,
                    c.c,
                    r.alpha,
                    r.ks,
                    r.cvm,
                    cell.completed,
                    cell.seconds
                )?;
            }
        }
        Ok(())
    }
}

/// Run every cell; cells are independent and a failing cell is recorded
/// without stopping the others.
pub fn run_study(cells: &[Cell], cfg: &StudyConfig) -> StudyResult {
    let outcomes = cells.par_iter().map(|c| run_cell(c, cfg)).collect();
    StudyResult {
        config: cfg.clone(),
        cells: outcomes,
    }
}

fn cell(model: Model, dgp: Dgp, n: usize, case: ErrorCase, known: bool, c: f64) -> Cell {
    Cell {
        model,
        dgp,
        n,
        case,
        known,
        c,
    }
}

/// Named collections of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// One small cell for a quick end-to-end check.
    Smoke,
    /// Size and power cells checked by the acceptance suite.
    Acceptance,
    /// Model 1 with known errors over n in {250, 500, 1000}, c in
    /// {0.1, 0.5, 1}, all three DGPs and both error laws.
    Table1,
    /// As `Table1` with errors estimated from replicates.
    Table2,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smoke" => Ok(Preset::Smoke),
            "acceptance" => Ok(Preset::Acceptance),
            "table1" => Ok(Preset::Table1),
            "table2" => Ok(Preset::Table2),
            _ => Err(Error::Config(format!("unknown preset '{s}' (smoke, acceptance, table1, table2)"))),
        }
    }
}

impl Preset {
    pub fn cells(self) -> Vec<Cell> {
        use ErrorCase::*;
        match self {
            Preset::Smoke => vec![cell(Model::Linear, Dgp::D0, 100, OrdinarySmooth, true, 1.0)],
            Preset::Acceptance => vec![
                cell(Model::Linear, Dgp::D0, 500, OrdinarySmooth, true, 1.0),
                cell(Model::Linear, Dgp::D0, 500, Supersmooth, true, 1.0),
                cell(Model::Linear, Dgp::D2, 500, OrdinarySmooth, true, 1.0),
                cell(Model::Linear, Dgp::D1, 1000, OrdinarySmooth, true, 1.0),
                cell(Model::Linear, Dgp::D0, 500, OrdinarySmooth, false, 1.0),
                cell(Model::Linear, Dgp::D0, 500, OrdinarySmooth, true, 0.1),
                cell(Model::Linear, Dgp::D0, 500, OrdinarySmooth, true, 0.5),
            ],
            Preset::Table1 | Preset::Table2 => {
                let known = self == Preset::Table1;
                let mut cells = Vec::new();
                for case in [OrdinarySmooth, Supersmooth] {
                    for c in [0.1, 0.5, 1.0] {
                        for n in [250, 500, 1000] {
                            for dgp in [Dgp::D0, Dgp::D1, Dgp::D2] {
                                cells.push(cell(Model::Linear, dgp, n, case, known, c));
                            }
                        }
                    }
                }
                cells
            }
        }
    }

    /// Monte Carlo repetitions the preset is meant to be run with.
    pub fn default_reps(self) -> usize {
        match self {
            Preset::Smoke => 10,
            Preset::Acceptance => 500,
            Preset::Table1 | Preset::Table2 => 1000,
        }
    }
}
