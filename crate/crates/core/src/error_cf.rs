//! Measurement-error characteristic functions.
//!
//! Known laws are either ordinary smooth (`1 / (1 + c2 t^2 + c4 t^4 + ...)`,
//! the Laplace law being the `c2 = var/2` member) or supersmooth Gaussian
//! (`exp(-mu t^2)`). An unknown law is estimated from one replicate per
//! observation through `|mean cos(t (W - W^r))|^(1/2)`, floored at `rho`
//! so that it can sit in a denominator.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Default floor applied to estimated characteristic functions.
pub const DEFAULT_FLOOR: f64 = 0.05;

/// Smallest value a known characteristic function may take before it is
/// treated as degenerate (its reciprocal would overflow).
const KNOWN_CF_MIN: f64 = 1e-250;

/// Half-width of the grid on which polynomial denominators are checked.
const POLY_SCAN_HALFWIDTH: f64 = 200.0;

/// Replicate differences `W_i - W_i^r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    diffs: Vec<f64>,
}

impl ReplicateSet {
    pub fn new(diffs: Vec<f64>) -> Result<Self> {
        if diffs.len() < 2 {
            return Err(Error::EmptyReplicates);
        }
        if let Some(i) = diffs.iter().position(|d| !d.is_finite()) {
            return Err(Error::InvalidSample(format!("replicate difference {i} is not finite")));
        }
        Ok(ReplicateSet { diffs })
    }

    pub fn from_pairs(w: &[f64], w_rep: &[f64]) -> Result<Self> {
        if w.len() != w_rep.len() {
            return Err(Error::LengthMismatch {
                expected: w.len(),
                got: w_rep.len(),
            });
        }
        Self::new(w.iter().zip(w_rep).map(|(a, b)| a - b).collect())
    }

    pub fn diffs(&self) -> &[f64] {
        &self.diffs
    }

    pub fn len(&self) -> usize {
        self.diffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diffs.is_empty()
    }

    /// `(1/n) sum w_j cos(t d_j)` and its first two derivatives in `t`.
    fn cosine_mean(&self, weights: Option<&[f64]>, t: f64) -> [f64; 3] {
        let mut m = [0.0; 3];
        for (j, &d) in self.diffs.iter().enumerate() {
            let w = weights.map_or(1.0, |w| w[j]);
            let (s, c) = (t * d).sin_cos();
            m[0] += w * c;
            m[1] -= w * d * s;
            m[2] -= w * d * d * c;
        }
        let n = self.diffs.len() as f64;
        [m[0] / n, m[1] / n, m[2] / n]
    }
}

/// A measurement-error characteristic function together with the
/// analytic derivatives the closed-form paths need.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorCf {
    /// `1 / (c0 + c1 t + ... + ca t^a)` with `c0 = 1` and only even powers.
    PolyReciprocal { coeffs: Vec<f64> },
    /// `exp(-mu t^2)`.
    GaussianSupersmooth { mu: f64 },
    /// `max(rho, |mean cos(t d_j)|^(1/2))`.
    Estimated { reps: Arc<ReplicateSet>, floor: f64 },
    /// As `Estimated` with the cosines weighted by bootstrap multipliers.
    PerturbedEstimated {
        reps: Arc<ReplicateSet>,
        weights: Arc<[f64]>,
        floor: f64,
    },
}

impl ErrorCf {
    /// No measurement error: `fe = 1`.
    pub fn none() -> Self {
        ErrorCf::PolyReciprocal { coeffs: vec![1.0] }
    }

    pub fn poly_reciprocal(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.first() != Some(&1.0) {
            return Err(Error::InvalidErrorModel("constant coefficient must be 1".into()));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidErrorModel("coefficients must be finite".into()));
        }
        if coeffs.iter().skip(1).step_by(2).any(|&c| c != 0.0) {
            return Err(Error::InvalidErrorModel(
                "odd-power coefficients must vanish for a symmetric error".into(),
            ));
        }
        let cf = ErrorCf::PolyReciprocal { coeffs };
        let steps = 20_000;
        for j in 0..=steps {
            let t = POLY_SCAN_HALFWIDTH * j as f64 / steps as f64;
            let p = cf.poly(t)[0];
            if !(p > 0.0) {
                return Err(Error::InvalidErrorModel(format!("denominator vanishes near t = {t}")));
            }
        }
        Ok(cf)
    }

    /// Laplace error with the given variance: `1 / (1 + (var/2) t^2)`.
    pub fn laplace(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::NonPositiveVariance(variance));
        }
        Ok(ErrorCf::PolyReciprocal {
            coeffs: vec![1.0, 0.0, variance / 2.0],
        })
    }

    /// Gaussian error with the given variance: `exp(-(var/2) t^2)`.
    pub fn gaussian(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::NonPositiveVariance(variance));
        }
        Ok(ErrorCf::GaussianSupersmooth { mu: variance / 2.0 })
    }

    pub fn gaussian_mu(mu: f64) -> Result<Self> {
        Self::gaussian(2.0 * mu)
    }

    pub fn estimated(reps: Arc<ReplicateSet>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        Ok(ErrorCf::Estimated { reps, floor })
    }

    pub fn perturbed(reps: Arc<ReplicateSet>, weights: Vec<f64>, floor: f64) -> Result<Self> {
        check_floor(floor)?;
        if weights.len() != reps.len() {
            return Err(Error::LengthMismatch {
                expected: reps.len(),
                got: weights.len(),
            });
        }
        Ok(ErrorCf::PerturbedEstimated {
            reps,
            weights: weights.into(),
            floor,
        })
    }

    pub fn is_estimated(&self) -> bool {
        matches!(self, ErrorCf::Estimated { .. } | ErrorCf::PerturbedEstimated { .. })
    }

    pub fn floor(&self) -> Option<f64> {
        match self {
            ErrorCf::Estimated { floor, .. } | ErrorCf::PerturbedEstimated { floor, .. } => Some(*floor),
            _ => None,
        }
    }

    fn poly(&self, t: f64) -> [f64; 3] {
        let ErrorCf::PolyReciprocal { coeffs } = self else {
            unreachable!()
        };
        let mut p = [0.0; 3];
        // Horner on p, p', p'' simultaneously.
        for &c in coeffs.iter().rev() {
            p[2] = p[2] * t + 2.0 * p[1];
            p[1] = p[1] * t + p[0];
            p[0] = p[0] * t + c;
        }
        p
    }

    fn cosine_mean(&self, t: f64) -> Option<[f64; 3]> {
        match self {
            ErrorCf::Estimated { reps, .. } => Some(reps.cosine_mean(None, t)),
            ErrorCf::PerturbedEstimated { reps, weights, .. } => Some(reps.cosine_mean(Some(weights), t)),
            _ => None,
        }
    }

    /// Characteristic function value, before any floor is applied.
    pub fn unfloored(&self, t: f64) -> f64 {
        match self {
            ErrorCf::PolyReciprocal { .. } => 1.0 / self.poly(t)[0],
            ErrorCf::GaussianSupersmooth { mu } => (-mu * t * t).exp(),
            _ => self.cosine_mean(t).map_or(f64::NAN, |m| m[0].abs().sqrt()),
        }
    }

    /// Characteristic function value; estimated variants are floored.
    pub fn value(&self, t: f64) -> f64 {
        let v = self.unfloored(t);
        match self.floor() {
            Some(rho) => v.max(rho),
            None => v,
        }
    }

    /// Value, or `DegenerateCf` where the function is too small to divide by
    /// (for estimated variants: where the floor would bind).
    pub fn checked_value(&self, t: f64) -> Result<f64> {
        let v = self.unfloored(t);
        let min = self.floor().unwrap_or(KNOWN_CF_MIN);
        if v >= min && v.is_finite() {
            Ok(v)
        } else {
            Err(Error::DegenerateCf { t, value: v })
        }
    }

    /// `[fe, fe', fe'']` at `t`.
    pub fn derivatives(&self, t: f64) -> Result<[f64; 3]> {
        match self {
            ErrorCf::PolyReciprocal { .. } => {
                let [p, p1, p2] = self.poly(t);
                Ok([1.0 / p, -p1 / (p * p), -p2 / (p * p) + 2.0 * p1 * p1 / (p * p * p)])
            }
            ErrorCf::GaussianSupersmooth { mu } => {
                let f = self.checked_value(t)?;
                Ok([f, -2.0 * mu * t * f, (4.0 * mu * mu * t * t - 2.0 * mu) * f])
            }
            _ => {
                let f = self.checked_value(t)?;
                let [m, m1, m2] = self.cosine_mean(t).expect("estimated variant");
                let s = m.signum();
                Ok([f, s * m1 / (2.0 * f), s * m2 / (2.0 * f) - m1 * m1 / (4.0 * f * f * f)])
            }
        }
    }

    /// `[1/fe, (1/fe)', (1/fe)'']` at `t`.
    pub fn reciprocal_derivatives(&self, t: f64) -> Result<[f64; 3]> {
        match self {
            ErrorCf::PolyReciprocal { .. } => Ok(self.poly(t)),
            ErrorCf::GaussianSupersmooth { mu } => {
                self.checked_value(t)?;
                let r = (mu * t * t).exp();
                Ok([r, 2.0 * mu * t * r, (2.0 * mu + 4.0 * mu * mu * t * t) * r])
            }
            _ => {
                let f = self.checked_value(t)?;
                let [m, m1, m2] = self.cosine_mean(t).expect("estimated variant");
                let s = m.signum();
                let a = m.abs();
                let r = 1.0 / f;
                Ok([
                    r,
                    -0.5 * s * m1 / (a * f),
                    -0.5 * s * m2 / (a * f) + 0.75 * m1 * m1 / (a * a * f),
                ])
            }
        }
    }
}

fn check_floor(floor: f64) -> Result<()> {
    if floor > 0.0 && floor < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("CF floor {floor} must lie in (0, 1)")))
    }
}

/// Laplace characteristic function with the given variance.
pub fn laplace_cf(variance: f64) -> Result<ErrorCf> {
    ErrorCf::laplace(variance)
}

/// Gaussian characteristic function with the given variance.
pub fn gaussian_cf(variance: f64) -> Result<ErrorCf> {
    ErrorCf::gaussian(variance)
}

/// Replicate-based estimate at `t`, floored at [`DEFAULT_FLOOR`].
pub fn estimate_cf(reps: &ReplicateSet, t: f64) -> f64 {
    estimate_cf_unfloored(reps, t).max(DEFAULT_FLOOR)
}

/// `|(1/n) sum cos(t d_j)|^(1/2)` without the floor, for diagnostics.
pub fn estimate_cf_unfloored(reps: &ReplicateSet, t: f64) -> f64 {
    reps.cosine_mean(None, t)[0].abs().sqrt()
}

/// Multiplier-weighted replicate estimate at `t`, floored at [`DEFAULT_FLOOR`].
pub fn perturb_cf(reps: &ReplicateSet, multipliers: &[f64], t: f64) -> Result<f64> {
    if multipliers.len() != reps.len() {
        return Err(Error::LengthMismatch {
            expected: reps.len(),
            got: multipliers.len(),
        });
    }
    Ok(reps.cosine_mean(Some(multipliers), t)[0].abs().sqrt().max(DEFAULT_FLOOR))
}

/// `1/2 - cos(t delta) / (2 fe(t)^2)`: mean zero when `fe` is the true law
/// of a symmetric error and `delta` is a replicate difference.
pub fn pi_epsilon(t: f64, delta: f64, true_cf: &ErrorCf) -> Result<f64> {
    let f = true_cf.checked_value(t)?;
    Ok(0.5 - (t * delta).cos() / (2.0 * f * f))
}
