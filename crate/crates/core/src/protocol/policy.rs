use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::isoforest::ScoreVector;

/// Consortium rule turning the broadcast scores into outlier flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum OutlierPolicy {
    /// The `ceil(f * N)` highest global scores are outliers, `f` in `(0, 1)`.
    Contamination(f64),
    /// Scores strictly above `tau` are outliers, `tau` in `(0, 1]`.
    Threshold(f64),
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy::Contamination(0.05)
    }
}

impl OutlierPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OutlierPolicy::Contamination(f) if !(f > 0.0 && f < 1.0) => {
                Err(Error::invalid(format!("contamination must lie in (0, 1), got {f}")))
            }
            OutlierPolicy::Threshold(t) if !(t > 0.0 && t <= 1.0) => {
                Err(Error::invalid(format!("threshold must lie in (0, 1], got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// Flags over all global rows. Ties at the contamination cut go to the
    /// lower row index.
    pub fn flag_rows(&self, scores: &ScoreVector) -> Result<Vec<bool>> {
        self.validate()?;
        let n = scores.len();
        let mut flags = vec![false; n];
        match *self {
            OutlierPolicy::Contamination(f) => {
                // absorb rounding in f * N so that f = k / N selects exactly k rows
                let k = ((f * n as f64 - 1e-9).ceil() as usize).min(n);
                for &i in scores.ranking().iter().take(k) {
                    flags[i] = true;
                }
            }
            OutlierPolicy::Threshold(t) => {
                for (flag, &s) in flags.iter_mut().zip(scores.as_slice()) {
                    *flag = s > t;
                }
            }
        }
        Ok(flags)
    }
}
