//! Deep soft-Q variant: the two-layer network with a linear head scores
//! `(state, case)` embedding pairs and is regressed onto soft TD targets.

use crate::error::{Error, Result};
use crate::softq::{soft_value, SoftTarget};
use crate::stepq::StepQParams;

/// A transition in embedding space. An empty `next_cases` is terminal.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepQTransition {
    pub state: Vec<f64>,
    pub case: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub next_cases: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftTdConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub target: SoftTarget,
}

/// `Q(s, M, c; θ)`: the network output before any squashing.
pub fn deep_q_value(theta: &StepQParams, s: &[f64], c: &[f64]) -> Result<f64> {
    theta.logit(s, c)
}

pub fn deep_q_target(t: &DeepQTransition, theta_bar: &StepQParams, cfg: SoftTdConfig) -> Result<f64> {
    if t.next_cases.is_empty() {
        return Ok(t.reward);
    }
    let qs = t.next_cases.iter().map(|c| deep_q_value(theta_bar, &t.next_state, c)).collect::<Result<Vec<_>>>()?;
    Ok(t.reward + cfg.gamma * soft_value(&qs, cfg.alpha, cfg.target)?)
}

pub fn deep_q_loss(
    batch: &[DeepQTransition],
    theta: &StepQParams,
    theta_bar: &StepQParams,
    cfg: SoftTdConfig,
) -> Result<f64> {
    deep_q_td_step(batch, theta, theta_bar, cfg).map(|(l, _)| l)
}

/// Mean squared TD error and its gradient `2 E[(Q − y) ∇_θ Q]`.
pub fn deep_q_td_step(
    batch: &[DeepQTransition],
    theta: &StepQParams,
    theta_bar: &StepQParams,
    cfg: SoftTdConfig,
) -> Result<(f64, StepQParams)> {
    if batch.is_empty() {
        return Err(Error::invalid("TD step on an empty batch"));
    }
    let n = batch.len() as f64;
    let mut loss = 0.0;
    let mut grad = StepQParams::zeros(theta.embed_dim(), theta.hidden());
    for t in batch {
        let (q, dq) = theta.logit_with_grad(&t.state, &t.case)?;
        let y = deep_q_target(t, theta_bar, cfg)?;
        loss += (q - y) * (q - y) / n;
        grad.add_scaled(&dq, 2.0 * (q - y) / n);
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_error_gives_zero_loss_and_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let theta = StepQParams::init(3, 5, &mut rng);
        let s = vec![0.6, 0.0, 0.8];
        let c = vec![0.0, 1.0, 0.0];
        let q = deep_q_value(&theta, &s, &c).unwrap();
        let t = DeepQTransition { state: s, case: c, reward: q, next_state: vec![1.0, 0.0, 0.0], next_cases: vec![] };
        let cfg = SoftTdConfig { gamma: 0.9, alpha: 1.0, target: SoftTarget::Scaled };
        let (loss, grad) = deep_q_td_step(&[t], &theta, &theta, cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.w1.iter().chain(&grad.b1).chain(&grad.w2).all(|g| *g == 0.0) && grad.b2 == 0.0);
    }

    #[test]
    fn myopic_target_is_the_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let theta = StepQParams::init(2, 3, &mut rng);
        let t = DeepQTransition {
            state: vec![1.0, 0.0],
            case: vec![0.0, 1.0],
            reward: 0.7,
            next_state: vec![0.0, 1.0],
            next_cases: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let cfg = SoftTdConfig { gamma: 0.0, alpha: 1.0, target: SoftTarget::Scaled };
        let q = deep_q_value(&theta, &t.state, &t.case).unwrap();
        let (loss, _) = deep_q_td_step(&[t], &theta, &theta, cfg).unwrap();
        assert!((loss - (q - 0.7).powi(2)).abs() < 1e-15);
    }
}
