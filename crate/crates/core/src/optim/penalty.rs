use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Penalty strength: one weight for all coefficients or one per coefficient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Penalizer {
    Scalar(f64),
    PerCovariate(Vec<f64>),
}

/// Elastic-net penalty
/// `Σ_k w_k [ (1 − l1_ratio)/2 · β_k² + l1_ratio · |β_k| ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub penalizer: Penalizer,
    pub l1_ratio: f64,
}

impl PenaltySpec {
    pub fn new(penalizer: Penalizer, l1_ratio: f64) -> Result<Self> {
        let spec = Self {
            penalizer,
            l1_ratio,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn scalar(w: f64, l1_ratio: f64) -> Result<Self> {
        Self::new(Penalizer::Scalar(w), l1_ratio)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.l1_ratio) {
            return Err(Error::arg(format!(
                "l1_ratio must lie in [0, 1], got {}",
                self.l1_ratio
            )));
        }
        let bad = match &self.penalizer {
            Penalizer::Scalar(w) => !(w.is_finite() && *w >= 0.0),
            Penalizer::PerCovariate(ws) => ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)),
        };
        if bad {
            return Err(Error::arg("penalizer weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// Per-coefficient weights for a vector of length `p`.
    pub fn weights(&self, p: usize) -> Result<Vec<f64>> {
        self.validate()?;
        match &self.penalizer {
            Penalizer::Scalar(w) => Ok(vec![*w; p]),
            Penalizer::PerCovariate(ws) if ws.len() == p => Ok(ws.clone()),
            Penalizer::PerCovariate(ws) => Err(Error::arg(format!(
                "penalizer has {} weights for {p} coefficients",
                ws.len()
            ))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.penalizer {
            Penalizer::Scalar(w) => *w == 0.0,
            Penalizer::PerCovariate(ws) => ws.iter().all(|w| *w == 0.0),
        }
    }

    pub fn value(&self, beta: &[f64]) -> Result<f64> {
        let w = self.weights(beta.len())?;
        let r = self.l1_ratio;
        Ok(w.iter()
            .zip(beta)
            .map(|(w, b)| w * ((1.0 - r) / 2.0 * b * b + r * b.abs()))
            .sum())
    }

    /// A subgradient, taking `sign(0) = 0`.
    pub fn subgradient(&self, beta: &[f64]) -> Result<Vec<f64>> {
        let w = self.weights(beta.len())?;
        let r = self.l1_ratio;
        Ok(w.iter()
            .zip(beta)
            .map(|(w, &b)| {
                let sign = if b > 0.0 {
                    1.0
                } else if b < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                w * ((1.0 - r) * b + r * sign)
            })
            .collect())
    }
}
