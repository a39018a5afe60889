//! Oracle and property checks shared by the property tests and the
//! acceptance harness. Each returns a one-line summary, or the reason it
//! failed.

use std::sync::Arc;

use mehet::bootstrap::{
    bootstrap_process_known, draw_multipliers, g_n, mammen_moments, MultiplierScheme, MAMMEN_HIGH, MAMMEN_LOW,
};
use mehet::error_cf::{pi_epsilon, ErrorCf, ReplicateSet};
use mehet::kernels::{flat_top_kft, fourier_moment, KernelSpec};
use mehet::process::QuadraturePath;
use mehet::{
    analyze, fit_corrected_ls, Bandwidth, BootstrapConfig, CorrectionMoments, Deconvolution, Error, EvaluationPath,
    FrequencyGrid, MeanFamily, TestConfig,
};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::{h0_sample, random_instance, rel_err, BruteKernel};

pub type Check = Result<String, String>;

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Largest relative discrepancy between the closed-form path and the
/// brute-force oracle over moments, plug-in variance and process.
pub fn oracle_error(seed: u64) -> f64 {
    let inst = random_instance(seed);
    let b = Bandwidth::new(inst.b).unwrap();
    let brute = BruteKernel::new(inst.b, &inst.cf);
    let k = KernelSpec::default();
    let mut worst: f64 = 0.0;
    for &xi in &inst.points {
        for &w in inst.sample.w().iter().take(3) {
            for m in 0..=2 {
                let fast = fourier_moment(m, xi, w, b, &inst.cf, &k).unwrap();
                let slow = brute.moment(m, w, xi);
                // x^m moments can cancel to near zero; scale by their size.
                worst = worst.max((fast - slow).norm() / slow.norm().max(1.0 + w.abs().powi(m as i32)));
            }
        }
    }
    let decon = Deconvolution::new(b, inst.cf.clone()).with_path(EvaluationPath::ClosedForm);
    // Tiny samples can give a negative plug-in variance; the value is still
    // reported, so compare it anyway.
    let s2 = match decon.sigma_n_sq(&inst.sample, &inst.theta) {
        Ok(v) | Err(Error::NegativeVarianceEstimate(v)) => v,
        Err(e) => panic!("seed {seed}: {e}"),
    };
    let s2_slow = brute.sigma_n_sq(&inst.sample, &inst.theta);
    worst = worst.max((s2 - s2_slow).abs() / s2_slow.abs().max(1.0));
    let grid = FrequencyGrid::from_points(inst.points.clone()).unwrap();
    let fast = decon.empirical_process(&inst.sample, &inst.theta, s2, &grid).unwrap();
    let slow = brute.process(&inst.sample, &inst.theta, s2, &inst.points);
    worst.max(rel_err(&fast.values, &slow))
}

/// Largest error of `G_n` against its definition.
pub fn g_n_error(seed: u64) -> f64 {
    let inst = random_instance(seed);
    let decon = Deconvolution::new(Bandwidth::new(inst.b).unwrap(), inst.cf.clone());
    let grid = FrequencyGrid::from_points(inst.points.clone()).unwrap();
    let g = g_n(&grid, &inst.sample, &decon).unwrap();
    let n = inst.sample.len() as f64;
    inst.points
        .iter()
        .zip(&g)
        .map(|(&xi, gx)| {
            let ecf: Complex64 = inst
                .sample
                .w()
                .iter()
                .map(|&w| Complex64::from_polar(1.0, w * xi))
                .sum::<Complex64>()
                / n;
            let want = ecf * flat_top_kft(inst.b * xi) / inst.cf.value(xi);
            (gx - want).norm() / want.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Mean of `1/2 - cos(t D)/(2 fe(t)^2)` over Laplace replicate differences
/// is zero.
pub fn pi_epsilon_unbiased() -> Check {
    let var = 1.0 / 3.0;
    let cf = ErrorCf::laplace(var).unwrap();
    let mut r = ChaCha8Rng::seed_from_u64(91);
    let s = (var / 2.0).sqrt();
    let mut lap = || {
        let a: f64 = Exp1.sample(&mut r);
        let b: f64 = Exp1.sample(&mut r);
        s * (a - b)
    };
    let n = 40_000;
    let d: Vec<f64> = (0..n).map(|_| lap() - lap()).collect();
    let mut worst: f64 = 0.0;
    for t in [0.3, 0.8, 1.5, 2.5] {
        let v: Vec<f64> = d.iter().map(|&d| pi_epsilon(t, d, &cf).unwrap()).collect();
        let m = v.iter().sum::<f64>() / n as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        worst = worst.max(m.abs() / (sd / (n as f64).sqrt()));
    }
    ensure(worst < 3.0, format!("max |mean|/se = {worst:.2} over 4 frequencies"))
}

/// Mammen weights: mean 0, variance 1, third moment 1.
pub fn mammen_checks() -> Check {
    let (m, v) = mammen_moments();
    let third = {
        let p = mehet::bootstrap::MAMMEN_P_LOW;
        p * MAMMEN_LOW.powi(3) + (1.0 - p) * MAMMEN_HIGH.powi(3)
    };
    let draws = draw_multipliers(MultiplierScheme::mammen(5), 200_000);
    let n = draws.len() as f64;
    let em = draws.iter().sum::<f64>() / n;
    let ev = draws.iter().map(|x| (x - em).powi(2)).sum::<f64>() / n;
    let ok = m.abs() < 1e-15 && (v - 1.0).abs() < 1e-14 && (third - 1.0).abs() < 1e-14;
    // 3 se for the mean (sd 1) and the variance (sd of V^2 is about 1).
    let se = 3.0 / n.sqrt();
    ensure(
        ok && em.abs() < se && (ev - 1.0).abs() < 3.0 * se,
        format!("analytic ({m:.1e}, {v}, {third}); sampled mean {em:.4}, var {ev:.4}"),
    )
}

/// Averaging the known-CF bootstrap process over many draws tends to zero.
pub fn bootstrap_mean_zero() -> Check {
    let sample = h0_sample(200, 17);
    let var = 1.0 / 3.0;
    let theta = fit_corrected_ls(&sample, MeanFamily::Linear, &CorrectionMoments::laplace(var)).unwrap();
    let decon = Deconvolution::new(Bandwidth::new(0.8).unwrap(), ErrorCf::laplace(var).unwrap());
    let s2 = decon.sigma_n_sq(&sample, &theta).unwrap();
    let grid = FrequencyGrid::uniform(-0.3, 0.3, 11).unwrap();
    let reps = 2000;
    let paths: Vec<Vec<Complex64>> = (0..reps)
        .map(|b| {
            let v = draw_multipliers(MultiplierScheme::mammen(1000 + b), sample.len());
            bootstrap_process_known(&sample, &theta, s2, &decon, &grid, &v).unwrap()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for j in 0..grid.len() {
        for part in [|z: Complex64| z.re, |z: Complex64| z.im] {
            let x: Vec<f64> = paths.iter().map(|p| part(p[j])).collect();
            let m = x.iter().sum::<f64>() / reps as f64;
            let sd = (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
            if sd > 0.0 {
                worst = worst.max(m.abs() / (sd / (reps as f64).sqrt()));
            }
        }
    }
    ensure(worst < 3.0, format!("max |mean|/se = {worst:.2} over {} grid points", grid.len()))
}

/// The projected bootstrap process equals direct assembly of
/// `(1/n) sum V_i integral [(Y_i - g)^2 - s^2] Kb (exp(i x xi) - G_n(xi)) dx`
/// by quadrature.
pub fn projection_identity() -> Check {
    let sample = h0_sample(60, 3);
    let var = 1.0 / 3.0;
    let theta = fit_corrected_ls(&sample, MeanFamily::Linear, &CorrectionMoments::laplace(var)).unwrap();
    let decon = Deconvolution::new(Bandwidth::new(0.7).unwrap(), ErrorCf::laplace(var).unwrap());
    let s2 = decon.sigma_n_sq(&sample, &theta).unwrap();
    let grid = FrequencyGrid::uniform(-0.8, 0.8, 9).unwrap();
    let v = draw_multipliers(MultiplierScheme::mammen(77), sample.len());
    let fast = bootstrap_process_known(&sample, &theta, s2, &decon, &grid, &v).unwrap();

    let q = QuadraturePath::new(&decon).unwrap();
    let n = sample.len() as f64;
    let g: Vec<Complex64> = grid
        .points()
        .iter()
        .map(|&xi| sample.w().iter().map(|&w| q.integrate(w, xi, |_| 1.0)).sum::<Complex64>() / n)
        .collect();
    let direct: Vec<Complex64> = grid
        .points()
        .iter()
        .zip(&g)
        .map(|(&xi, &gx)| {
            let total: Complex64 = (0..sample.len())
                .map(|i| {
                    let (y, w) = (sample.y()[i], sample.w()[i]);
                    let mark = |x: f64| (y - theta.eval(x)).powi(2) - s2;
                    v[i] * (q.integrate(w, xi, mark) - gx * q.integrate(w, 0.0, mark))
                })
                .sum();
            total / n.sqrt()
        })
        .collect();
    let err = rel_err(&fast, &direct);
    ensure(err < 1e-6, format!("relative error {err:.2e}"))
}

/// `S_n(-xi) = conj S_n(xi)` on a symmetric grid and `S_n(0) = 0` at the
/// plug-in variance, for both a known and an estimated error law.
pub fn symmetry_and_plugin_zero() -> Check {
    let var = 1.0 / 3.0;
    let sample = h0_sample(150, 8);
    let theta = fit_corrected_ls(&sample, MeanFamily::Linear, &CorrectionMoments::laplace(var)).unwrap();
    let grid = FrequencyGrid::uniform(-1.0, 1.0, 21).unwrap();
    let b = Bandwidth::new(0.8).unwrap();
    let reps = Arc::new(ReplicateSet::new(sample.w().iter().map(|w| (w * 7.3).sin() * 0.6).collect()).unwrap());
    let mut worst_sym: f64 = 0.0;
    let mut worst_zero: f64 = 0.0;
    for cf in [ErrorCf::laplace(var).unwrap(), ErrorCf::estimated(reps, 0.05).unwrap()] {
        let p = Deconvolution::new(b, cf).test_process(&sample, &theta, &grid).unwrap();
        let m = p.values.len();
        for j in 0..m {
            worst_sym = worst_sym.max((p.values[j] - p.values[m - 1 - j].conj()).norm());
        }
        worst_zero = worst_zero.max(p.values[grid.zero_index().unwrap()].norm());
    }
    ensure(
        worst_sym < 1e-8 && worst_zero < 1e-10,
        format!("symmetry gap {worst_sym:.1e}, |S_n(0)| {worst_zero:.1e}"),
    )
}

/// Whole analyses are bit-identical whatever the worker count.
pub fn parallel_determinism() -> Check {
    let spec = mehet::simulation::DgpSpec {
        model: mehet::simulation::Model::Linear,
        dgp: mehet::simulation::Dgp::D2,
        n: 300,
        error_case: mehet::ErrorCase::OrdinarySmooth,
        with_replicates: true,
    };
    let sample = mehet::simulation::generate(&spec, 4).unwrap();
    let mut out = Vec::new();
    for error in ["known:laplace:var=0.3333333333333333", "unknown"] {
        let cfg = TestConfig::new(error.parse().unwrap(), MeanFamily::Linear, BootstrapConfig::new(99, vec![0.05], 12));
        let runs: Vec<_> = [1, 3]
            .into_iter()
            .map(|threads| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
                pool.install(|| analyze(&sample, &cfg).unwrap())
            })
            .collect();
        let (a, b) = (&runs[0], &runs[1]);
        let same = a.process.values == b.process.values
            && a.outcome.ks_reps == b.outcome.ks_reps
            && a.outcome.cvm_reps == b.outcome.cvm_reps;
        out.push(same);
    }
    ensure(out.iter().all(|&s| s), format!("known {}, unknown {} (1 vs 3 threads)", out[0], out[1]))
}
