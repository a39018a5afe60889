//! Smoothing kernel defined through its Fourier transform, and the
//! deconvolution kernels built from it.
//!
//! The smoothing kernel is the infinite-order flat-top kernel
//!
//! ```text
//! kft(t) = 1                                   |t| <= a
//!        = exp(-exp(-(|t|-a)^-2) / (|t|-c0)^2)  a < |t| < c0
//!        = 0                                   |t| >= c0
//! ```
//!
//! with `a = 0.05` and `c0 = 1` by default. For an error characteristic
//! function `fe` and bandwidth `b` the deconvolution kernel is
//!
//! ```text
//! Kb(u) = 1/(2 pi b) * integral exp(-i t u) kft(t) / fe(t/b) dt
//! ```
//!
//! and all Fourier-weighted integrals of `Kb((x - w)/b)` have closed forms:
//!
//! ```text
//! integral Kb((x-w)/b) exp(i x xi) dx = exp(i w xi) kft(b xi) / fe(xi)
//! ```
//!
//! Moments `x^m` for `m <= 2` follow by differentiating in `xi`.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::error_cf::ErrorCf;

/// Fourier transform of the flat-top smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    /// `kft` equals one on `[-flat_halfwidth, flat_halfwidth]`.
    pub flat_halfwidth: f64,
    /// `kft` vanishes outside `(-support_halfwidth, support_halfwidth)`.
    pub support_halfwidth: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            flat_halfwidth: 0.05,
            support_halfwidth: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn new(flat_halfwidth: f64, support_halfwidth: f64) -> Result<Self> {
        if !(flat_halfwidth >= 0.0 && support_halfwidth > flat_halfwidth && support_halfwidth.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel needs 0 <= flat ({flat_halfwidth}) < support ({support_halfwidth})"
            )));
        }
        Ok(KernelSpec {
            flat_halfwidth,
            support_halfwidth,
        })
    }

    pub fn ft(&self, t: f64) -> f64 {
        self.ft_derivatives(t)[0]
    }

    /// `[kft(t), kft'(t), kft''(t)]`, all in closed form.
    pub fn ft_derivatives(&self, t: f64) -> [f64; 3] {
        let a = t.abs();
        if a <= self.flat_halfwidth {
            return [1.0, 0.0, 0.0];
        }
        if a >= self.support_halfwidth {
            return [0.0, 0.0, 0.0];
        }
        let u = a - self.flat_halfwidth;
        let v = a - self.support_halfwidth;
        let inner = (-1.0 / (u * u)).exp();
        let phi = -inner / (v * v);
        let value = phi.exp();
        if inner == 0.0 {
            // exp(-u^-2) underflowed: the transition has not started yet in
            // double precision, so the function is flat here.
            return [value, 0.0, 0.0];
        }
        if value == 0.0 {
            return [0.0, 0.0, 0.0];
        }
        let inner_d1 = inner * 2.0 / (u * u * u);
        let inner_d2 = inner * (4.0 / u.powi(6) - 6.0 / u.powi(4));
        let phi_d1 = -inner_d1 / (v * v) + 2.0 * inner / (v * v * v);
        let phi_d2 = -inner_d2 / (v * v) + 4.0 * inner_d1 / (v * v * v) - 6.0 * inner / v.powi(4);
        let sign = t.signum();
        [
            value,
            sign * value * phi_d1,
            value * (phi_d2 + phi_d1 * phi_d1),
        ]
    }
}

/// The flat-top kernel transform with the default constants.
pub fn flat_top_kft(t: f64) -> f64 {
    KernelSpec::default().ft(t)
}

/// Smoothing bandwidth, in the units of the observed covariate.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Bandwidth(f64);

impl Bandwidth {
    pub fn new(b: f64) -> Result<Self> {
        if b > 0.0 && b.is_finite() {
            Ok(Bandwidth(b))
        } else {
            Err(Error::InvalidBandwidth(b))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Composite Simpson settings for integrals over the kernel's frequency
/// support `[-c0, c0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Simpson intervals per unit length of the frequency interval.
    pub nodes_per_unit: usize,
    /// The convergence check reruns the rule with this many times more nodes.
    pub refinement_factor: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            nodes_per_unit: 2048,
            refinement_factor: 2,
            rel_tol: 1e-8,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_unit == 0 || self.refinement_factor < 2 {
            return Err(Error::InvalidArgument(
                "quadrature needs nodes_per_unit >= 1 and refinement_factor >= 2".into(),
            ));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-3) {
            return Err(Error::InvalidArgument(format!(
                "quadrature rel_tol {} outside (0, 1e-3]",
                self.rel_tol
            )));
        }
        Ok(())
    }

    fn intervals(&self, length: f64) -> usize {
        let n = ((self.nodes_per_unit as f64) * length).ceil() as usize;
        (n.max(2) + 1) & !1
    }
}

/// Composite Simpson weights for `intervals` (even) equal steps of size `h`.
pub(crate) fn simpson_weights(intervals: usize, h: f64) -> Vec<f64> {
    debug_assert!(intervals % 2 == 0 && intervals >= 2);
    (0..=intervals)
        .map(|k| {
            let c = if k == 0 || k == intervals {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            c * h / 3.0
        })
        .collect()
}

/// Tabulated integrand of a deconvolution kernel, ready for evaluation at
/// many points. Holds `kft(t) / fe(t/b)` on the refined Simpson nodes.
#[derive(Debug, Clone)]
pub struct DeconKernel {
    bandwidth: f64,
    nodes: Vec<f64>,
    fine_weights: Vec<f64>,
    coarse_weights: Vec<f64>,
    stride: usize,
    values: Vec<f64>,
    scale: f64,
    rel_tol: f64,
}

impl DeconKernel {
    pub fn new(b: Bandwidth, fe: &ErrorCf, k: &KernelSpec, q: &QuadratureConfig) -> Result<Self> {
        q.validate()?;
        let c0 = k.support_halfwidth;
        let coarse = q.intervals(2.0 * c0);
        let fine = coarse * q.refinement_factor;
        let h = 2.0 * c0 / fine as f64;
        let nodes: Vec<f64> = (0..=fine).map(|j| -c0 + j as f64 * h).collect();
        let bw = b.get();
        let mut values = Vec::with_capacity(nodes.len());
        for &t in &nodes {
            let kv = k.ft(t);
            if kv == 0.0 {
                values.push(0.0);
                continue;
            }
            let f = fe.value(t / bw);
            if !(f.abs() > 0.0) || !f.is_finite() {
                return Err(Error::DegenerateCf { t: t / bw, value: f });
            }
            values.push(kv / f);
        }
        let fine_weights = simpson_weights(fine, h);
        let coarse_weights = simpson_weights(coarse, h * q.refinement_factor as f64);
        let norm = 1.0 / (2.0 * PI * bw);
        let scale = norm
            * values
                .iter()
                .zip(&fine_weights)
                .map(|(v, w)| v.abs() * w)
                .sum::<f64>();
        Ok(DeconKernel {
            bandwidth: bw,
            nodes,
            fine_weights,
            coarse_weights,
            stride: q.refinement_factor,
            values,
            scale,
            rel_tol: q.rel_tol,
        })
    }

    /// Upper bound on `sup |Kb|`: `1/(2 pi b) * integral |kft/fe|`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `Kb(u)` with the refinement and imaginary-residue checks.
    pub fn eval(&self, u: f64) -> Result<f64> {
        let norm = 1.0 / (2.0 * PI * self.bandwidth);
        let mut fine = Complex64::new(0.0, 0.0);
        let mut coarse = Complex64::new(0.0, 0.0);
        for (j, ((&t, &v), &w)) in self
            .nodes
            .iter()
            .zip(&self.values)
            .zip(&self.fine_weights)
            .enumerate()
        {
            if v == 0.0 {
                continue;
            }
            let (s, c) = (t * u).sin_cos();
            let term = Complex64::new(c * v, -s * v);
            fine += term * w;
            if j % self.stride == 0 {
                coarse += term * self.coarse_weights[j / self.stride];
            }
        }
        fine *= norm;
        coarse *= norm;
        let tol = self.rel_tol * fine.re.abs().max(self.scale);
        let change = (fine - coarse).norm();
        if change > tol {
            return Err(Error::QuadratureNotConverged { change, tol });
        }
        if fine.im.abs() > self.rel_tol * (1.0 + fine.re.abs()) {
            return Err(Error::QuadratureNotConverged {
                change: fine.im.abs(),
                tol: self.rel_tol * (1.0 + fine.re.abs()),
            });
        }
        Ok(fine.re)
    }

    /// Half-width (in kernel units) beyond which `|Kb|` stays below
    /// `tol * scale()`. Scans outward in steps of `step` and stops after a
    /// full window of `window` length below the threshold.
    pub fn support_radius(&self, tol: f64) -> Result<f64> {
        let step = 2.0;
        let window = 40.0;
        let threshold = tol * self.scale;
        let mut u = 0.0;
        let mut quiet_since: Option<f64> = None;
        while u < 1.0e5 {
            let v = self.eval(u)?.abs().max(self.eval(u + 0.5 * step)?.abs());
            if v < threshold {
                let start = *quiet_since.get_or_insert(u);
                if u - start >= window {
                    return Ok(start);
                }
            } else {
                quiet_since = None;
            }
            u += step;
        }
        Err(Error::QuadratureNotConverged {
            change: u,
            tol: threshold,
        })
    }
}

/// Deconvolution kernel `Kb(x) = 1/(2 pi b) integral exp(-i t x) kft(t)/fe(t/b) dt`.
pub fn decon_kernel(
    x: f64,
    b: Bandwidth,
    fe: &ErrorCf,
    k: &KernelSpec,
    q: &QuadratureConfig,
) -> Result<f64> {
    DeconKernel::new(b, fe, k, q)?.eval(x)
}

/// Plain smoothing kernel `K(x) = 1/(2 pi) integral exp(-i t x) kft(t) dt`.
pub fn kernel_value(x: f64, k: &KernelSpec, q: &QuadratureConfig) -> Result<f64> {
    let b = Bandwidth(1.0);
    DeconKernel::new(b, &ErrorCf::none(), k, q)?.eval(x)
}

/// `h(xi) = kft(b xi) / fe(xi)` and its first two derivatives in `xi`.
///
/// This is the multiplier every Fourier-weighted integral of the
/// deconvolution kernel reduces to.
pub fn fourier_multiplier(xi: f64, b: Bandwidth, fe: &ErrorCf, k: &KernelSpec) -> Result<[f64; 3]> {
    let bw = b.get();
    let [kv, kd1, kd2] = k.ft_derivatives(bw * xi);
    if kv == 0.0 && kd1 == 0.0 && kd2 == 0.0 {
        // Outside the kernel support the multiplier vanishes identically.
        return Ok([0.0, 0.0, 0.0]);
    }
    let [r, rd1, rd2] = fe.reciprocal_derivatives(xi)?;
    Ok([
        kv * r,
        bw * kd1 * r + kv * rd1,
        bw * bw * kd2 * r + 2.0 * bw * kd1 * rd1 + kv * rd2,
    ])
}

/// `integral Kb((x - w)/b) exp(i x xi) dx = exp(i w xi) kft(b xi) / fe(xi)`.
pub fn fourier_weight(xi: f64, w: f64, b: Bandwidth, fe: &ErrorCf, k: &KernelSpec) -> Result<Complex64> {
    let f = fe.checked_value(xi)?;
    let kv = k.ft(b.get() * xi);
    Ok(Complex64::from_polar(1.0, w * xi) * (kv / f))
}

/// `integral x^m Kb((x - w)/b) exp(i x xi) dx` for `m <= 2`, assembled from
/// the analytic derivatives of `exp(i w xi) h(xi)`.
pub fn fourier_moment(
    m: usize,
    xi: f64,
    w: f64,
    b: Bandwidth,
    fe: &ErrorCf,
    k: &KernelSpec,
) -> Result<Complex64> {
    if m > 2 {
        return Err(Error::UnsupportedOrder(m));
    }
    let [h, h1, h2] = fourier_multiplier(xi, b, fe, k)?;
    Ok(moment_from_multiplier(m, w, xi, [h, h1, h2]))
}

pub(crate) fn moment_from_multiplier(m: usize, w: f64, xi: f64, [h, h1, h2]: [f64; 3]) -> Complex64 {
    let phase = Complex64::from_polar(1.0, w * xi);
    let inner = match m {
        0 => Complex64::new(h, 0.0),
        1 => Complex64::new(w * h, -h1),
        _ => Complex64::new(w * w * h - h2, -2.0 * w * h1),
    };
    phase * inner
}
