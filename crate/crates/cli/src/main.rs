use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mehet::io::{self, Columns, KernelTarget, RunConfig};
use mehet::simulation::{self, Cell, Dgp, Model, Preset, StudyConfig, MIN_N};
use mehet::{BandwidthChoice, ErrorCase, ErrorSpec, Error, FrequencyGrid, MeanFamily, UnknownWeighting};

#[derive(Parser, Debug)]
#[command(name = "mehet", version, about = "Heteroskedasticity tests with a mismeasured covariate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a data file
    Run(RunArgs),
    /// Monte Carlo size and power study
    Simulate(SimArgs),
    /// Tabulate the kernel transform, an error CF or a deconvolution kernel
    Kernel(KernelArgs),
}

#[derive(Args, Debug)]
struct Shared {
    /// Frequency grid lo:hi:count
    #[arg(long, default_value = "-1:1:41", allow_hyphen_values = true)]
    grid: String,
    /// Clip frequencies to |xi| <= LIMIT / b
    #[arg(long, default_value_t = mehet::pipeline::DEFAULT_TAPER_LIMIT)]
    taper_limit: f64,
    /// Use the grid as given, without clipping
    #[arg(long)]
    no_taper: bool,
    /// Bootstrap replicates
    #[arg(long, default_value_t = 199)]
    bootstrap: usize,
    /// Significance level (repeatable)
    #[arg(long = "alpha", default_values_t = [0.05])]
    alphas: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl Shared {
    fn taper(&self) -> Option<f64> {
        (!self.no_taper).then_some(self.taper_limit)
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// CSV file with a header row
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "y")]
    y_col: String,
    #[arg(long, default_value = "w")]
    w_col: String,
    /// Replicate measurement column (needed for an unknown error law)
    #[arg(long)]
    wrep_col: Option<String>,
    /// known:laplace:var=V, known:gaussian:var=V, known:gaussian:sd=S, unknown[:ordinary|:supersmooth]
    #[arg(long)]
    error: String,
    #[arg(long, value_enum, default_value_t = Mean::Linear)]
    mean: Mean,
    /// Rule-of-thumb bandwidth constant
    #[arg(long, conflicts_with = "bandwidth")]
    bandwidth_c: Option<f64>,
    /// Fixed bandwidth
    #[arg(long)]
    bandwidth: Option<f64>,
    #[command(flatten)]
    shared: Shared,
    /// Write the text report here
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a key=value report here
    #[arg(long)]
    kv_out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mean {
    Constant,
    Linear,
    Quadratic,
}

impl From<Mean> for MeanFamily {
    fn from(m: Mean) -> Self {
        match m {
            Mean::Constant => MeanFamily::Constant,
            Mean::Linear => MeanFamily::Linear,
            Mean::Quadratic => MeanFamily::Quadratic,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Case {
    Ordinary,
    Supersmooth,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Weighting {
    CfAndObservations,
    CfOnly,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// smoke, acceptance, table1 or table2; without it a single cell is
    /// built from --model, --dgp, --n, --case, --unknown and --c
    #[arg(long)]
    preset: Option<String>,
    /// Monte Carlo repetitions (defaults to the preset's own count, or 100)
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Mean::Linear)]
    model: Mean,
    #[arg(long, default_value_t = 0)]
    dgp: u64,
    #[arg(long, default_value_t = 500)]
    n: usize,
    #[arg(long, value_enum, default_value_t = Case::Ordinary)]
    case: Case,
    /// Estimate the error law from a simulated replicate column
    #[arg(long)]
    unknown: bool,
    /// Bandwidth constant
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, value_enum, default_value_t = Weighting::CfAndObservations)]
    weighting: Weighting,
    #[command(flatten)]
    shared: Shared,
    /// Rejection-rate CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum What {
    Kft,
    Cf,
    Decon,
}

#[derive(Args, Debug)]
struct KernelArgs {
    #[arg(long, value_enum)]
    what: What,
    /// Known error law, for cf and decon
    #[arg(long, default_value = "known:laplace:var=0.3333333333333333")]
    error: String,
    /// Bandwidth, for decon
    #[arg(long, default_value_t = 0.5)]
    bandwidth: f64,
    #[arg(long, default_value = "-2:2:401", allow_hyphen_values = true)]
    grid: String,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> mehet::Result<()> {
    let error: ErrorSpec = args.error.parse()?;
    let bandwidth = match (args.bandwidth, args.bandwidth_c) {
        (Some(b), _) => BandwidthChoice::Fixed(b),
        (None, c) => BandwidthChoice::RuleOfThumb { c: c.unwrap_or(1.0) },
    };
    let cfg = RunConfig {
        columns: Columns {
            y: args.y_col,
            w: args.w_col,
            w_rep: args.wrep_col,
        },
        family: args.mean.into(),
        bandwidth,
        grid: io::parse_grid(&args.shared.grid)?,
        taper_limit: args.shared.taper(),
        bootstrap: args.shared.bootstrap,
        alphas: args.shared.alphas.clone(),
        seed: args.shared.seed,
        out: args.out,
        kv_out: args.kv_out,
        ..RunConfig::new(args.data, error)
    };
    let report = io::cmd_run(&cfg)?;
    print!("{}", report.to_text());
    eprintln!("elapsed: {:.2}s", report.seconds);
    Ok(())
}

fn simulate(args: SimArgs) -> mehet::Result<()> {
    let (cells, default_reps) = match &args.preset {
        Some(p) => {
            let p: Preset = p.parse()?;
            (p.cells(), p.default_reps())
        }
        None => {
            let model = match args.model {
                Mean::Linear => Model::Linear,
                Mean::Constant => Model::Constant,
                Mean::Quadratic => return Err(Error::Config("simulated models are linear or constant".into())),
            };
            let dgp = Dgp::from_index(args.dgp).ok_or_else(|| Error::Config(format!("dgp must be 0, 1 or 2, got {}", args.dgp)))?;
            let case = match args.case {
                Case::Ordinary => ErrorCase::OrdinarySmooth,
                Case::Supersmooth => ErrorCase::Supersmooth,
            };
            let cell = Cell {
                model,
                dgp,
                n: args.n,
                case,
                known: !args.unknown,
                c: args.c,
            };
            (vec![cell], 100)
        }
    };
    let reps = args.reps.unwrap_or(default_reps);
    if reps == 0 {
        return Err(Error::Config("reps must be at least 1".into()));
    }
    for c in &cells {
        if c.n < MIN_N || !(c.c > 0.0 && c.c.is_finite()) {
            return Err(Error::Config(format!("cells need n >= {MIN_N} and c > 0 (got n = {}, c = {})", c.n, c.c)));
        }
    }
    let (lo, hi, count) = io::parse_grid(&args.shared.grid)?;
    if count < 5 || count % 2 == 0 {
        return Err(Error::Config(format!("grid count must be odd and at least 5, got {count}")));
    }
    if let Some(t) = args.shared.taper() {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("taper limit must be positive, got {t}")));
        }
    }
    let mut cfg = StudyConfig::new(reps, args.shared.bootstrap, args.shared.alphas.clone(), args.shared.seed);
    mehet::BootstrapConfig::new(cfg.bootstrap, cfg.alphas.clone(), 0)
        .validate()
        .map_err(|e| Error::Config(e.to_string()))?;
    cfg.grid = FrequencyGrid::uniform(lo, hi, count).map_err(|e| Error::Config(e.to_string()))?;
    cfg.taper_limit = args.shared.taper();
    cfg.weighting = match args.weighting {
        Weighting::CfAndObservations => UnknownWeighting::CfAndObservations,
        Weighting::CfOnly => UnknownWeighting::CfOnly,
    };
    let result = simulation::run_study(&cells, &cfg);
    print!("{result}");
    if let Some(failed) = result.failures().next() {
        return Err(Error::InvalidArgument(format!(
            "{} cell(s) failed, first: {}",
            result.failures().count(),
            failed.error.as_deref().unwrap_or("")
        ))
        .at("simulate"));
    }
    if let Some(out) = &args.out {
        let mut bytes = Vec::new();
        result.write_csv(&mut bytes)?;
        io::write_atomic(out, &bytes)?;
    }
    Ok(())
}

fn kernel(args: KernelArgs) -> mehet::Result<()> {
    let known = || -> mehet::Result<_> {
        match args.error.parse::<ErrorSpec>()? {
            ErrorSpec::Known { law, variance } => Ok((law, variance)),
            ErrorSpec::Unknown { .. } => Err(Error::Config("kernel dumps need a known error law".into())),
        }
    };
    let target = match args.what {
        What::Kft => KernelTarget::Kft,
        What::Cf => {
            let (law, variance) = known()?;
            KernelTarget::Cf { law, variance }
        }
        What::Decon => {
            let (law, variance) = known()?;
            if !(args.bandwidth > 0.0 && args.bandwidth.is_finite()) {
                return Err(Error::Config(format!("bandwidth must be positive, got {}", args.bandwidth)));
            }
            KernelTarget::Decon {
                law,
                variance,
                bandwidth: args.bandwidth,
            }
        }
    };
    let rows = io::cmd_kernel(target, io::parse_grid(&args.grid)?, &args.out)?;
    eprintln!("wrote {} rows to {}", rows.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Simulate(a) => simulate(a),
        Command::Kernel(a) => kernel(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // A failed simulation cell counts as a numerical failure.
            let config = match &e {
                Error::Stage { stage: "simulate", .. } => false,
                e => e.is_config(),
            };
            ExitCode::from(if config { 2 } else { 3 })
        }
    }
}
