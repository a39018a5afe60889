use std::sync::Arc;

use crate::error::{Error, Result};
use crate::error_cf::ReplicateSet;

/// Smallest sample the tests accept.
pub const MIN_SAMPLE: usize = 5;

/// Observed data: response `y`, mismeasured covariate `w` and, optionally,
/// a replicate measurement `w_rep` of the same latent covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    y: Vec<f64>,
    w: Vec<f64>,
    w_rep: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(y: Vec<f64>, w: Vec<f64>, w_rep: Option<Vec<f64>>) -> Result<Self> {
        if y.len() != w.len() {
            return Err(Error::LengthMismatch {
                expected: y.len(),
                got: w.len(),
            });
        }
        if let Some(r) = &w_rep {
            if r.len() != y.len() {
                return Err(Error::LengthMismatch {
                    expected: y.len(),
                    got: r.len(),
                });
            }
        }
        if y.len() < MIN_SAMPLE {
            return Err(Error::InvalidSample(format!(
                "{} observations, need at least {MIN_SAMPLE}",
                y.len()
            )));
        }
        let all = y.iter().chain(&w).chain(w_rep.iter().flatten());
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSample("non-finite value".into()));
        }
        Ok(Sample { y, w, w_rep })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_rep(&self) -> Option<&[f64]> {
        self.w_rep.as_deref()
    }

    /// Replicate differences, when a replicate column is present.
    pub fn replicates(&self) -> Option<Result<Arc<ReplicateSet>>> {
        self.w_rep
            .as_ref()
            .map(|r| ReplicateSet::from_pairs(&self.w, r).map(Arc::new))
    }

    /// Same data with every covariate (and replicate) shifted by `c`.
    pub fn shifted(&self, c: f64) -> Sample {
        Sample {
            y: self.y.clone(),
            w: self.w.iter().map(|w| w + c).collect(),
            w_rep: self.w_rep.as_ref().map(|r| r.iter().map(|w| w + c).collect()),
        }
    }
}
