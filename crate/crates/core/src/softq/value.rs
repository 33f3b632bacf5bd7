use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::logsumexp;

/// Which soft value enters the TD target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SoftTarget {
    /// `α log Σ exp(Q / α)`, consistent with the softmax retrieval policy.
    #[default]
    Scaled,
    /// `α log Σ exp(Q)`.
    Unscaled,
}

/// Soft value of a set of candidate Q values.
pub fn soft_value(q_values: &[f64], alpha: f64, form: SoftTarget) -> Result<f64> {
    if q_values.is_empty() {
        return Err(Error::domain("soft value of an empty candidate set"));
    }
    if alpha.is_nan() || alpha <= 0.0 {
        return Err(Error::domain(format!("alpha must be positive, got {alpha}")));
    }
    Ok(match form {
        SoftTarget::Scaled => {
            let scaled: Vec<f64> = q_values.iter().map(|q| q / alpha).collect();
            alpha * logsumexp(&scaled)
        }
        SoftTarget::Unscaled => alpha * logsumexp(q_values),
    })
}

/// `Σ_c μ(c) [Q(c) − α log μ(c)]` for an arbitrary retrieval distribution.
pub fn policy_value(q_values: &[f64], probs: &[f64], alpha: f64) -> f64 {
    q_values.iter().zip(probs).filter(|(_, &p)| p > 0.0).map(|(q, p)| p * (q - alpha * p.ln())).sum()
}
