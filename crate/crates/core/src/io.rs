//! CSV input and output, run configuration, reports and kernel dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bootstrap::BootstrapConfig;
use crate::eiv_regression::MeanFamily;
use crate::error::{Error, Result};
use crate::error_cf::ErrorCf;
use crate::kernels::{Bandwidth, DeconKernel, KernelSpec, QuadratureConfig};
use crate::pipeline::{analyze, Analysis, BandwidthChoice, ErrorSpec, KnownLaw, TestConfig};
use crate::process::FrequencyGrid;
use crate::sample::{Sample, MIN_SAMPLE};

/// Column names to read from a data file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Columns {
    pub y: String,
    pub w: String,
    pub w_rep: Option<String>,
}

impl Default for Columns {
    fn default() -> Self {
        Columns {
            y: "y".into(),
            w: "w".into(),
            w_rep: None,
        }
    }
}

/// Read a sample from a headed CSV file. Row numbers in errors are file
/// line numbers (the header is line 1).
pub fn load_csv(path: &Path, cols: &Columns) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let iy = find(&cols.y)?;
    let iw = find(&cols.w)?;
    let irep = cols.w_rep.as_deref().map(find).transpose()?;

    let (mut y, mut w) = (Vec::new(), Vec::new());
    let mut w_rep = irep.map(|_| Vec::new());
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec.position().map_or(k + 2, |p| p.line() as usize);
        let cell = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    col: name.to_string(),
                })
        };
        y.push(cell(iy, &cols.y)?);
        w.push(cell(iw, &cols.w)?);
        if let (Some(i), Some(out), Some(name)) = (irep, w_rep.as_mut(), cols.w_rep.as_deref()) {
            out.push(cell(i, name)?);
        }
    }
    if y.len() < MIN_SAMPLE {
        return Err(Error::TooFewRows(y.len()));
    }
    Sample::new(y, w, w_rep)
}

/// Write `y,w[,w_rep]`. Values use the shortest representation that reads
/// back to the same bits.
pub fn write_csv(sample: &Sample, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match sample.w_rep() {
        Some(_) => w.write_record(["y", "w", "w_rep"])?,
        None => w.write_record(["y", "w"])?,
    }
    for i in 0..sample.len() {
        let mut row = vec![sample.y()[i].to_string(), sample.w()[i].to_string()];
        if let Some(r) = sample.w_rep() {
            row.push(r[i].to_string());
        }
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Write to a sibling temporary file and rename it into place, so a failed
/// run never leaves a partial file behind.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
    if res.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    res.map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `lo:hi:count`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize)> {
    let bad = || Error::Config(format!("grid must look like lo:hi:count, got '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi, count] = parts.as_slice() else {
        return Err(bad());
    };
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
        count.trim().parse().map_err(|_| bad())?,
    ))
}

/// Everything needed to test one data file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: PathBuf,
    pub columns: Columns,
    pub error: ErrorSpec,
    pub family: MeanFamily,
    pub bandwidth: BandwidthChoice,
    pub grid: (f64, f64, usize),
    pub taper_limit: Option<f64>,
    pub bootstrap: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    /// Text report destination.
    pub out: Option<PathBuf>,
    /// Flat `key=value` report destination.
    pub kv_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(data: PathBuf, error: ErrorSpec) -> Self {
        RunConfig {
            data,
            columns: Columns::default(),
            error,
            family: MeanFamily::Linear,
            bandwidth: BandwidthChoice::RuleOfThumb { c: 1.0 },
            grid: (-1.0, 1.0, 41),
            taper_limit: Some(crate::pipeline::DEFAULT_TAPER_LIMIT),
            bootstrap: 199,
            alphas: vec![0.05],
            seed: 1,
            out: None,
            kv_out: None,
        }
    }

    /// Range checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi, count) = self.grid;
        if count < 5 || count % 2 == 0 {
            return Err(Error::Config(format!("grid count must be odd and at least 5, got {count}")));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Config(format!("grid bounds must be finite with lo < hi, got {lo}:{hi}")));
        }
        if !self.error.is_known() && self.columns.w_rep.is_none() {
            return Err(Error::Config("an unknown error law needs a replicate column".into()));
        }
        match self.bandwidth {
            BandwidthChoice::RuleOfThumb { c } if !(c > 0.0 && c.is_finite()) => {
                return Err(Error::Config(format!("bandwidth constant must be positive, got {c}")));
            }
            BandwidthChoice::Fixed(b) if !(b > 0.0 && b.is_finite()) => {
                return Err(Error::Config(format!("bandwidth must be positive, got {b}")));
            }
            _ => {}
        }
        if let Some(t) = self.taper_limit {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("taper limit must be positive, got {t}")));
            }
        }
        if let ErrorSpec::Known { variance, .. } = self.error {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(Error::Config(format!("error variance must be positive, got {variance}")));
            }
        }
        BootstrapConfig::new(self.bootstrap, self.alphas.clone(), self.seed)
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn test_config(&self) -> Result<TestConfig> {
        let (lo, hi, count) = self.grid;
        Ok(TestConfig {
            bandwidth: self.bandwidth,
            grid: FrequencyGrid::uniform(lo, hi, count)?,
            taper_limit: self.taper_limit,
            ..TestConfig::new(
                self.error,
                self.family,
                BootstrapConfig::new(self.bootstrap, self.alphas.clone(), self.seed),
            )
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelResult {
    pub alpha: f64,
    pub ks_crit: f64,
    pub cvm_crit: f64,
    pub ks_reject: bool,
    pub cvm_reject: bool,
}

/// Outcome of one test run.
#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub n: usize,
    pub error: ErrorSpec,
    pub family: MeanFamily,
    pub theta: Vec<f64>,
    pub sigma_eps_sq: f64,
    pub sigma_n_sq: f64,
    pub bandwidth: f64,
    /// Grid actually evaluated (after clipping): lo, hi, count.
    pub grid: (f64, f64, usize),
    pub replicates: usize,
    pub seed: u64,
    pub ks: f64,
    pub cvm: f64,
    pub ks_pvalue: f64,
    pub cvm_pvalue: f64,
    pub levels: Vec<LevelResult>,
    pub redraws: usize,
    /// Wall time; kept out of the written files so they stay reproducible.
    pub seconds: f64,
}

impl TestReport {
    pub fn new(n: usize, cfg: &TestConfig, a: &Analysis, seconds: f64) -> Self {
        let o = &a.outcome;
        let g = &a.process.grid;
        TestReport {
            n,
            error: cfg.error,
            family: cfg.family,
            theta: a.theta.theta().to_vec(),
            sigma_eps_sq: a.sigma_eps_sq,
            sigma_n_sq: a.process.sigma_n_sq,
            bandwidth: a.bandwidth.get(),
            grid: (g.lo(), g.hi(), g.len()),
            replicates: o.ks_reps.len(),
            seed: cfg.bootstrap.seed,
            ks: o.observed.ks,
            cvm: o.observed.cvm,
            ks_pvalue: o.ks_pvalue,
            cvm_pvalue: o.cvm_pvalue,
            levels: o
                .critical
                .iter()
                .map(|c| LevelResult {
                    alpha: c.alpha,
                    ks_crit: c.ks,
                    cvm_crit: c.cvm,
                    ks_reject: o.observed.ks > c.ks,
                    cvm_reject: o.observed.cvm > c.cvm,
                })
                .collect(),
            redraws: o.redraws,
            seconds,
        }
    }

    fn pairs(&self) -> Vec<(String, String)> {
        let theta: Vec<String> = self.theta.iter().map(f64::to_string).collect();
        let mut kv = vec![
            ("n".to_string(), self.n.to_string()),
            ("error".into(), self.error.to_string()),
            ("mean".into(), self.family.name().into()),
            ("theta".into(), theta.join(" ")),
            ("sigma_eps_sq".into(), self.sigma_eps_sq.to_string()),
            ("sigma_n_sq".into(), self.sigma_n_sq.to_string()),
            ("bandwidth".into(), self.bandwidth.to_string()),
            ("grid".into(), format!("{}:{}:{}", self.grid.0, self.grid.1, self.grid.2)),
            ("bootstrap".into(), self.replicates.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("ks".into(), self.ks.to_string()),
            ("cvm".into(), self.cvm.to_string()),
            ("ks_pvalue".into(), self.ks_pvalue.to_string()),
            ("cvm_pvalue".into(), self.cvm_pvalue.to_string()),
            ("redraws".into(), self.redraws.to_string()),
        ];
        for l in &self.levels {
            kv.push((format!("ks_crit_{}", l.alpha), l.ks_crit.to_string()));
            kv.push((format!("ks_reject_{}", l.alpha), l.ks_reject.to_string()));
            kv.push((format!("cvm_crit_{}", l.alpha), l.cvm_crit.to_string()));
            kv.push((format!("cvm_reject_{}", l.alpha), l.cvm_reject.to_string()));
        }
        kv
    }

    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    /// `key: value` lines followed by a table of levels.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs().into_iter().take_while(|(k, _)| !k.starts_with("ks_crit")) {
            let _ = writeln!(s, "{k}: {v}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6} {:>12} {:>7} {:>12} {:>7}", "alpha", "ks_crit", "ks", "cvm_crit", "cvm");
        for l in &self.levels {
            let yn = |b: bool| if b { "reject" } else { "accept" };
            let _ = writeln!(
                s,
                "{:>6} {:>12.6} {:>7} {:>12.6} {:>7}",
                l.alpha,
                l.ks_crit,
                yn(l.ks_reject),
                l.cvm_crit,
                yn(l.cvm_reject)
            );
        }
        s
    }
}

/// Load, test and (if configured) write the report files.
pub fn cmd_run(cfg: &RunConfig) -> Result<TestReport> {
    cfg.validate()?;
    let test = cfg.test_config().map_err(|e| e.at("config"))?;
    let start = Instant::now();
    let sample = load_csv(&cfg.data, &cfg.columns).map_err(|e| e.at("load"))?;
    let analysis = analyze(&sample, &test)?;
    let report = TestReport::new(sample.len(), &test, &analysis, start.elapsed().as_secs_f64());
    if let Some(p) = &cfg.out {
        write_atomic(p, report.to_text().as_bytes()).map_err(|e| e.at("output"))?;
    }
    if let Some(p) = &cfg.kv_out {
        write_atomic(p, report.to_key_values().as_bytes()).map_err(|e| e.at("output"))?;
    }
    Ok(report)
}

/// What `cmd_kernel` tabulates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelTarget {
    /// Flat-top kernel transform `kft(t)`.
    Kft,
    /// Characteristic function of a known error law.
    Cf { law: KnownLaw, variance: f64 },
    /// Deconvolution kernel as a weight in data units, `x -> Kb(x / b)`,
    /// which integrates to one in `x`.
    Decon { law: KnownLaw, variance: f64, bandwidth: f64 },
}

fn known_cf(law: KnownLaw, variance: f64) -> Result<ErrorCf> {
    match law {
        KnownLaw::Laplace => ErrorCf::laplace(variance),
        KnownLaw::Gaussian => ErrorCf::gaussian(variance),
    }
}

/// Values of `target` at `count` equally spaced points of `[lo, hi]`.
pub fn kernel_table(target: KernelTarget, lo: f64, hi: f64, count: usize) -> Result<Vec<(f64, f64)>> {
    if count < 2 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Config(format!("kernel grid needs lo < hi and count >= 2, got {lo}:{hi}:{count}")));
    }
    let xs: Vec<f64> = (0..count)
        .map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64)
        .collect();
    let k = KernelSpec::default();
    match target {
        KernelTarget::Kft => Ok(xs.iter().map(|&t| (t, k.ft(t))).collect()),
        KernelTarget::Cf { law, variance } => {
            let cf = known_cf(law, variance)?;
            Ok(xs.iter().map(|&t| (t, cf.value(t))).collect())
        }
        KernelTarget::Decon {
            law,
            variance,
            bandwidth,
        } => {
            let b = Bandwidth::new(bandwidth)?;
            let kernel = DeconKernel::new(b, &known_cf(law, variance)?, &k, &QuadratureConfig::default())?;
            xs.iter()
                .map(|&x| kernel.eval(x / bandwidth).map(|v| (x, v)))
                .collect()
        }
    }
}

/// Write `x,value` rows.
pub fn cmd_kernel(target: KernelTarget, grid: (f64, f64, usize), out: &Path) -> Result<Vec<(f64, f64)>> {
    let rows = kernel_table(target, grid.0, grid.1, grid.2)?;
    let mut s = String::from("x,value\n");
    for (x, v) in &rows {
        let _ = writeln!(s, "{x},{v}");
    }
    write_atomic(out, s.as_bytes())?;
    Ok(rows)
}
