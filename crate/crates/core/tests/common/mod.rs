//! Independent brute-force evaluation used as an oracle by several test
//! targets. Nothing here calls the crate's own quadrature code.
#![allow(dead_code)]

pub mod checks;

use std::f64::consts::PI;

use mehet::error_cf::ErrorCf;
use mehet::kernels::flat_top_kft;
use mehet::simulation::{generate, Dgp, DgpSpec, Model};
use mehet::{ErrorCase, MeanModel, Sample};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// `Kb(u)` tabulated by trapezoid in `t` on `[-1, 1]`, Simpson weights in
/// `u` already folded in.
pub struct BruteKernel {
    pub b: f64,
    pub u: Vec<f64>,
    pub wk: Vec<f64>,
}

const T_STEPS: usize = 4000;
const U_STEP: f64 = 0.05;
const U_MAX: f64 = 300.0;

impl BruteKernel {
    pub fn new(b: f64, cf: &ErrorCf) -> Self {
        Self::with_resolution(b, cf, T_STEPS, U_STEP, U_MAX)
    }

    pub fn with_resolution(b: f64, cf: &ErrorCf, t_steps: usize, u_step: f64, u_max: f64) -> Self {
        let h = 2.0 / t_steps as f64;
        // kft vanishes with all derivatives at the ends, so the trapezoid
        // rule is spectrally accurate here.
        let t: Vec<f64> = (0..=t_steps).map(|j| -1.0 + j as f64 * h).collect();
        let g: Vec<f64> = t.iter().map(|&t| flat_top_kft(t) / cf.value(t / b) * h).collect();
        let half = (u_max / u_step).round() as usize;
        let mut u = Vec::with_capacity(2 * half + 1);
        let mut wk = Vec::with_capacity(2 * half + 1);
        for j in 0..=2 * half {
            let uu = (j as f64 - half as f64) * u_step;
            let k: f64 = t.iter().zip(&g).map(|(&t, &g)| (t * uu).cos() * g).sum::<f64>() / (2.0 * PI * b);
            let c = if j == 0 || j == 2 * half {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            };
            u.push(uu);
            wk.push(k * c * u_step / 3.0);
        }
        BruteKernel { b, u, wk }
    }

    /// `integral f(x) Kb((x - w)/b) exp(i x xi) dx`.
    pub fn integrate(&self, w: f64, xi: f64, f: impl Fn(f64) -> f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (&u, &k) in self.u.iter().zip(&self.wk) {
            let x = w + self.b * u;
            acc += Complex64::from_polar(k * f(x), x * xi);
        }
        acc * self.b
    }

    pub fn moment(&self, m: usize, w: f64, xi: f64) -> Complex64 {
        self.integrate(w, xi, |x| x.powi(m as i32))
    }

    pub fn sigma_n_sq(&self, s: &Sample, theta: &MeanModel) -> f64 {
        let total: f64 = s
            .y()
            .iter()
            .zip(s.w())
            .map(|(&y, &w)| self.integrate(w, 0.0, |x| (y - theta.eval(x)).powi(2)).re)
            .sum();
        total / s.len() as f64
    }

    /// `sqrt(n) S_n(xi)`.
    pub fn process(&self, s: &Sample, theta: &MeanModel, sigma_sq: f64, points: &[f64]) -> Vec<Complex64> {
        let n = s.len() as f64;
        points
            .iter()
            .map(|&xi| {
                let total: Complex64 = s
                    .y()
                    .iter()
                    .zip(s.w())
                    .map(|(&y, &w)| self.integrate(w, xi, |x| (y - theta.eval(x)).powi(2) - sigma_sq))
                    .sum();
                total / n.sqrt()
            })
            .collect()
    }
}

/// A small random problem with a known error law.
#[derive(Debug)]
pub struct Instance {
    pub sample: Sample,
    pub cf: ErrorCf,
    pub b: f64,
    pub theta: MeanModel,
    pub points: Vec<f64>,
}

pub fn random_instance(seed: u64) -> Instance {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let n = r.random_range(5..=10);
    let var: f64 = r.random_range(0.1..0.5);
    let laplace = r.random_bool(0.5);
    let b: f64 = r.random_range(0.4..1.0);
    let (mut y, mut w) = (Vec::new(), Vec::new());
    for _ in 0..n {
        let x: f64 = StandardNormal.sample(&mut r);
        let u: f64 = StandardNormal.sample(&mut r);
        let e = if laplace {
            let a: f64 = Exp1.sample(&mut r);
            let c: f64 = Exp1.sample(&mut r);
            (var / 2.0).sqrt() * (a - c)
        } else {
            let z: f64 = StandardNormal.sample(&mut r);
            var.sqrt() * z
        };
        y.push(1.0 + x + u);
        w.push(x + e);
    }
    let cf = if laplace {
        ErrorCf::laplace(var).unwrap()
    } else {
        ErrorCf::gaussian(var).unwrap()
    };
    let theta = MeanModel::new(
        mehet::MeanFamily::Linear,
        vec![r.random_range(0.5..1.5), r.random_range(0.5..1.5)],
    )
    .unwrap();
    let top = 0.6 / b;
    let points = (0..9).map(|j| -top + 2.0 * top * j as f64 / 8.0).collect();
    Instance {
        sample: Sample::new(y, w, None).unwrap(),
        cf,
        b,
        theta,
        points,
    }
}

/// `max |a - b| / max |b|`.
pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    diff / scale
}

pub fn h0_sample(n: usize, seed: u64) -> Sample {
    let spec = DgpSpec {
        model: Model::Linear,
        dgp: Dgp::D0,
        n,
        error_case: ErrorCase::OrdinarySmooth,
        with_replicates: false,
    };
    generate(&spec, seed).unwrap()
}
