use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use mehet::io::write_csv;
use mehet::simulation::{generate, Dgp, DgpSpec, Model};
use mehet::ErrorCase;

const LAPLACE: &str = "known:laplace:var=0.3333333333333333";

fn mehet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mehet")).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn table(path: &Path) -> Vec<(f64, f64)> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (x, v) = l.split_once(',').unwrap();
            (x.parse().unwrap(), v.parse().unwrap())
        })
        .collect()
}

fn write_sample(path: &Path, dgp: Dgp, n: usize, seed: u64, with_replicates: bool) {
    let spec = DgpSpec {
        model: Model::Linear,
        dgp,
        n,
        error_case: ErrorCase::OrdinarySmooth,
        with_replicates,
    };
    write_csv(&generate(&spec, seed).unwrap(), path).unwrap();
}

fn kv(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}"))
        .to_string()
}

#[test]
fn kernel_dumps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.csv");
    let o = mehet(&["kernel", "--what", "kft", "--grid", "0:1:21", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let t = table(&out);
    assert_eq!((t[0].1, t[1].1, t[20].1), (1.0, 1.0, 0.0));

    let o = mehet(&["kernel", "--what", "cf", "--error", "known:gaussian:var=0.5", "--grid", "-1:1:3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(table(&out)[1], (0.0, 1.0));

    let o = mehet(&["kernel", "--what", "decon", "--error", LAPLACE, "--bandwidth", "0.6", "--grid", "-40:40:8001", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let t = table(&out);
    let area: f64 = t.windows(2).map(|p| (p[1].0 - p[0].0) * (p[0].1 + p[1].1) / 2.0).sum();
    assert!((area - 1.0).abs() < 1e-3, "{area}");
}

#[test]
fn configuration_errors_exit_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let out = dir.path().join("r.txt");
    write_sample(&data, Dgp::D0, 100, 1, false);
    let d = data.to_str().unwrap();
    let o_ = out.to_str().unwrap();

    let o = mehet(&["run", "--data", d, "--error", "unknown", "--out", o_]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("replicate column"));
    assert!(!out.exists());

    for extra in [
        &["--error", LAPLACE, "--y-col", "nope"][..],
        &["--error", LAPLACE, "--grid", "-1:1:40"],
        &["--error", LAPLACE, "--bootstrap", "5"],
        &["--error", LAPLACE, "--alpha", "0.7"],
        &["--error", LAPLACE, "--bandwidth-c", "-1"],
        &["--error", "known:cauchy:var=1"],
    ] {
        let mut args = vec!["run", "--data", d, "--out", o_];
        args.extend_from_slice(extra);
        let o = mehet(&args);
        assert_eq!(code(&o), 2, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.exists());
    }
    assert_eq!(code(&mehet(&["run", "--data", d])), 2);
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let kvp = dir.path().join("r.kv");
    write_sample(&data, Dgp::D0, 200, 2, false);
    let o = mehet(&[
        "run", "--data", data.to_str().unwrap(), "--error", "known:gaussian:var=1", "--bandwidth", "0.01",
        "--kv-out", kvp.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!kvp.exists());
}

#[test]
fn run_with_replicates_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    write_sample(&data, Dgp::D0, 300, 3, true);
    let mut outputs = Vec::new();
    for name in ["a.kv", "b.kv"] {
        let p = dir.path().join(name);
        let o = mehet(&[
            "run", "--data", data.to_str().unwrap(), "--error", "unknown", "--wrep-col", "w_rep", "--alpha", "0.05",
            "--alpha", "0.1", "--seed", "9", "--kv-out", p.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        outputs.push(fs::read(&p).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let ks: f64 = kv(&text, "ks").parse().unwrap();
    let crit: f64 = kv(&text, "ks_crit_0.1").parse().unwrap();
    assert_eq!(kv(&text, "ks_reject_0.1") == "true", ks > crit);
    assert_eq!(kv(&text, "error"), "unknown:ordinary");
}

/// Null data through the binary: p-values in (0, 1] and about 5%
/// rejections over 100 data sets (3 binomial se above 0.05 is 0.115).
#[test]
fn null_rejection_rate_through_binary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    let kvp = dir.path().join("r.kv");
    let mut rejections = 0;
    for s in 0..100u64 {
        write_sample(&data, Dgp::D0, 500, 10_000 + s, false);
        let seed = s.to_string();
        let o = mehet(&[
            "run", "--data", data.to_str().unwrap(), "--error", LAPLACE, "--seed", &seed, "--kv-out",
            kvp.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0);
        let text = fs::read_to_string(&kvp).unwrap();
        for key in ["ks_pvalue", "cvm_pvalue"] {
            let p: f64 = kv(&text, key).parse().unwrap();
            assert!(p > 0.0 && p <= 1.0);
        }
        rejections += (kv(&text, "ks_reject_0.05") == "true") as usize;
    }
    assert!(rejections <= 11, "{rejections} rejections out of 100");
}

#[test]
fn smoke_simulation_is_fast_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let p = dir.path().join(name);
        let start = Instant::now();
        let o = mehet(&["simulate", "--preset", "smoke", "--reps", "10", "--bootstrap", "19", "--alpha", "0.1", "--seed", "4", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(start.elapsed().as_secs() < 30);
        files.push(fs::read_to_string(&p).unwrap());
    }
    assert_eq!(files[0], files[1]);
    assert_eq!(files[0].lines().count(), 3);
    assert!(files[0].starts_with("model,case,dgp,n,c,alpha,stat,rate,reps,B,seed\n"));

    let p = dir.path().join("c.csv");
    let o = mehet(&["simulate", "--n", "10", "--out", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let o = mehet(&["simulate", "--preset", "nope"]);
    assert_eq!(code(&o), 2);
    assert!(!p.exists());
}
