//! Single-step parametric case memory: a two-layer network
//! `Q(s, c; θ) = σ(w2 · tanh(W1 [s ‖ c] + b1) + b2)` read as
//! `p(r = 1 | s, c)`, trained online with cross-entropy (or MSE).

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, sigmoid, softplus};
use crate::mmdp::{Action, CaseBank, CaseId, State};
use crate::params::{take, Parameters, Tensor};

pub const DEFAULT_HIDDEN: usize = 64;

/// Weights of the two-layer network. `w1` is row-major `hidden × 2d`.
#[derive(Clone, Debug, PartialEq)]
pub struct StepQParams {
    embed_dim: usize,
    hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl StepQParams {
    pub fn zeros(embed_dim: usize, hidden: usize) -> Self {
        StepQParams {
            embed_dim,
            hidden,
            w1: vec![0.0; hidden * 2 * embed_dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Uniform fan-in scaled initialisation; biases start at zero.
    pub fn init<R: Rng + ?Sized>(embed_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(embed_dim, hidden);
        let a1 = (3.0 / (2 * embed_dim) as f64).sqrt();
        let a2 = (3.0 / hidden as f64).sqrt();
        p.w1.iter_mut().for_each(|w| *w = rng.gen_range(-a1..a1));
        p.w2.iter_mut().for_each(|w| *w = rng.gen_range(-a2..a2));
        p
    }

    /// Starts from a proximity score. Hidden units come in pairs sharing a
    /// Gaussian direction `r` applied to `s − c`, with biases `±1` and output
    /// weights `±1/m`, so each pair computes the bump
    /// `tanh(x + 1) − tanh(x − 1)` of `x = sharpness · r·(s − c)` and the
    /// untrained `Q` is highest for cases closest to the query.
    pub fn proximity_init<R: Rng + ?Sized>(
        embed_dim: usize,
        hidden: usize,
        sharpness: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if hidden == 0 || !hidden.is_multiple_of(2) {
            return Err(Error::invalid(format!("proximity initialisation needs an even hidden width, got {hidden}")));
        }
        let mut p = Self::zeros(embed_dim, hidden);
        let m = (hidden / 2) as f64;
        let d = embed_dim;
        for j in 0..hidden / 2 {
            let r: Vec<f64> = (0..d).map(|_| sharpness * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            for (unit, sign) in [(2 * j, 1.0), (2 * j + 1, -1.0)] {
                let row = &mut p.w1[unit * 2 * d..(unit + 1) * 2 * d];
                row[..d].copy_from_slice(&r);
                row[d..].iter_mut().zip(&r).for_each(|(w, x)| *w = -x);
                p.b1[unit] = sign;
                p.w2[unit] = sign / m;
            }
        }
        p.b2 = -1.0;
        Ok(p)
    }

    pub fn from_parts(
        embed_dim: usize,
        hidden: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if w1.len() != hidden * 2 * embed_dim || b1.len() != hidden || w2.len() != hidden {
            return Err(Error::structural("step-Q parameter shapes do not match (hidden, 2d)"));
        }
        Ok(StepQParams { embed_dim, hidden, w1, b1, w2, b2 })
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    fn input_dim(&self) -> usize {
        2 * self.embed_dim
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(&self.b1).chain(&self.w2).all(|x| x.is_finite()) && self.b2.is_finite()
    }

    fn check_dims(&self, s: &[f64], c: &[f64]) -> Result<()> {
        if s.len() != self.embed_dim || c.len() != self.embed_dim {
            return Err(Error::structural(format!(
                "embeddings of length {} and {} for a network of dimension {}",
                s.len(),
                c.len(),
                self.embed_dim
            )));
        }
        Ok(())
    }

    /// `W1_s s + b1`: the query half of the first layer.
    pub fn project_query(&self, s: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        (0..self.hidden).map(|j| self.b1[j] + math::dot(&self.w1[j * 2 * d..j * 2 * d + d], s)).collect()
    }

    /// `W1_c c`: the case half of the first layer.
    pub fn project_case(&self, c: &[f64]) -> Vec<f64> {
        let d = self.embed_dim;
        (0..self.hidden).map(|j| math::dot(&self.w1[j * 2 * d + d..(j + 1) * 2 * d], c)).collect()
    }

    /// Logit from precomputed halves of the first layer.
    pub fn logit_projected(&self, query: &[f64], case: &[f64]) -> f64 {
        self.b2 + query.iter().zip(case).zip(&self.w2).map(|((q, c), w)| w * (q + c).tanh()).sum::<f64>()
    }

    /// Pre-sigmoid output `z`.
    pub fn logit(&self, s: &[f64], c: &[f64]) -> Result<f64> {
        self.check_dims(s, c)?;
        Ok(self.logit_projected(&self.project_query(s), &self.project_case(c)))
    }

    /// `Q(s, c; θ) ∈ (0, 1)`.
    pub fn forward(&self, s: &[f64], c: &[f64]) -> Result<f64> {
        self.logit(s, c).map(sigmoid)
    }

    /// `z` and `∇_θ z`.
    pub fn logit_with_grad(&self, s: &[f64], c: &[f64]) -> Result<(f64, StepQParams)> {
        self.check_dims(s, c)?;
        let n = self.input_dim();
        let x: Vec<f64> = s.iter().chain(c).copied().collect();
        let mut grad = StepQParams::zeros(self.embed_dim, self.hidden);
        let mut z = self.b2;
        for j in 0..self.hidden {
            let row = &self.w1[j * n..(j + 1) * n];
            let h = (self.b1[j] + math::dot(row, &x)).tanh();
            z += self.w2[j] * h;
            grad.w2[j] = h;
            let dpre = self.w2[j] * (1.0 - h * h);
            grad.b1[j] = dpre;
            for (g, xi) in grad.w1[j * n..(j + 1) * n].iter_mut().zip(&x) {
                *g = dpre * xi;
            }
        }
        grad.b2 = 1.0;
        Ok((z, grad))
    }

    /// `self += scale · other`.
    pub fn add_scaled(&mut self, other: &StepQParams, scale: f64) {
        for (a, b) in self.w1.iter_mut().zip(&other.w1) {
            *a += scale * b;
        }
        for (a, b) in self.b1.iter_mut().zip(&other.b1) {
            *a += scale * b;
        }
        for (a, b) in self.w2.iter_mut().zip(&other.w2) {
            *a += scale * b;
        }
        self.b2 += scale * other.b2;
    }

    pub fn scale(&mut self, s: f64) {
        self.w1.iter_mut().chain(self.b1.iter_mut()).chain(self.w2.iter_mut()).for_each(|x| *x *= s);
        self.b2 *= s;
    }
}

impl Parameters for StepQParams {
    fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor { name: "stepq.w1".into(), shape: vec![self.hidden, 2 * self.embed_dim], data: self.w1.clone() },
            Tensor { name: "stepq.b1".into(), shape: vec![self.hidden], data: self.b1.clone() },
            Tensor { name: "stepq.w2".into(), shape: vec![1, self.hidden], data: self.w2.clone() },
            Tensor::scalar("stepq.b2", self.b2),
        ]
    }

    fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let w1 = take(tensors, "stepq.w1")?;
        let b1 = take(tensors, "stepq.b1")?;
        let w2 = take(tensors, "stepq.w2")?;
        let b2 = take(tensors, "stepq.b2")?;
        if w1.shape.len() != 2 || w1.shape[1] % 2 != 0 || b2.data.len() != 1 {
            return Err(Error::structural("step-Q tensors have the wrong shape"));
        }
        StepQParams::from_parts(
            w1.shape[1] / 2,
            w1.shape[0],
            w1.data.clone(),
            b1.data.clone(),
            w2.data.clone(),
            b2.data[0],
        )
    }
}

/// One `(s, c, r)` training pair for the step-Q network.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTriple {
    pub s_embedding: Vec<f64>,
    pub c_embedding: Vec<f64>,
    pub r: f64,
}

impl LabeledTriple {
    pub fn new(s_embedding: Vec<f64>, c_embedding: Vec<f64>, r: f64) -> Result<Self> {
        if r != 0.0 && r != 1.0 {
            return Err(Error::invalid(format!("single-step reward must be 0 or 1, got {r}")));
        }
        Ok(LabeledTriple { s_embedding, c_embedding, r })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    #[serde(rename = "ce")]
    CrossEntropy,
    Mse,
}

pub fn mse_loss(q: f64, r: f64) -> f64 {
    (q - r) * (q - r)
}

pub fn ce_loss(q: f64, r: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::domain(format!("cross-entropy needs q in (0, 1), got {q}")));
    }
    Ok(-r * q.ln() - (1.0 - r) * (1.0 - q).ln())
}

/// Cross-entropy evaluated from the logit, finite for any finite `z`.
pub fn ce_loss_from_logit(z: f64, r: f64) -> f64 {
    softplus(z) - r * z
}

/// The factor `(Q − r) / (Q (1 − Q))` multiplying `∇Q` in the CE gradient.
pub fn ce_prefactor(q: f64, r: f64) -> f64 {
    (q - r) / (q * (1.0 - q))
}

/// `d(ce)/dz = Q − r`.
pub fn ce_logit_grad(q: f64, r: f64) -> f64 {
    q - r
}

/// `d(mse)/dz = 2 (Q − r) Q (1 − Q)`.
pub fn mse_logit_grad(q: f64, r: f64) -> f64 {
    2.0 * (q - r) * q * (1.0 - q)
}

fn non_empty(batch: &[LabeledTriple]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    Ok(())
}

/// Mean loss over a batch.
pub fn mean_loss(batch: &[LabeledTriple], theta: &StepQParams, objective: Objective) -> Result<f64> {
    non_empty(batch)?;
    let mut total = 0.0;
    for t in batch {
        let z = theta.logit(&t.s_embedding, &t.c_embedding)?;
        total += match objective {
            Objective::CrossEntropy => ce_loss_from_logit(z, t.r),
            Objective::Mse => mse_loss(sigmoid(z), t.r),
        };
    }
    Ok(total / batch.len() as f64)
}

/// Gradient of [`mean_loss`], through the logit.
pub fn loss_gradient(batch: &[LabeledTriple], theta: &StepQParams, objective: Objective) -> Result<StepQParams> {
    non_empty(batch)?;
    let mut acc = StepQParams::zeros(theta.embed_dim, theta.hidden);
    for t in batch {
        let (z, dz) = theta.logit_with_grad(&t.s_embedding, &t.c_embedding)?;
        let q = sigmoid(z);
        let g = match objective {
            Objective::CrossEntropy => ce_logit_grad(q, t.r),
            Objective::Mse => mse_logit_grad(q, t.r),
        };
        acc.add_scaled(&dz, g);
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}

/// Mean cross-entropy gradient `E[(Q − r) ∇z]`.
pub fn ce_gradient(batch: &[LabeledTriple], theta: &StepQParams) -> Result<StepQParams> {
    loss_gradient(batch, theta, Objective::CrossEntropy)
}

/// The same gradient written as `E[(Q − r)/(Q(1 − Q)) · ∇Q]`.
pub fn ce_gradient_probability_form(batch: &[LabeledTriple], theta: &StepQParams) -> Result<StepQParams> {
    non_empty(batch)?;
    let mut acc = StepQParams::zeros(theta.embed_dim, theta.hidden);
    for t in batch {
        let (z, mut dq) = theta.logit_with_grad(&t.s_embedding, &t.c_embedding)?;
        let q = sigmoid(z);
        dq.scale(q * (1.0 - q));
        acc.add_scaled(&dq, ce_prefactor(q, t.r));
    }
    acc.scale(1.0 / batch.len() as f64);
    Ok(acc)
}

/// Online training applied on every parametric write.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Minibatch SGD updates per write.
    pub steps_per_write: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { steps_per_write: 4, batch_size: 32, learning_rate: 0.5, objective: Objective::CrossEntropy }
    }
}

/// One SGD step on a uniformly drawn minibatch; returns the minibatch loss
/// before the update.
pub fn sgd_step<R: Rng + ?Sized>(
    theta: &mut StepQParams,
    buffer: &[LabeledTriple],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let n = cfg.batch_size.min(buffer.len());
    let batch: Vec<LabeledTriple> =
        index::sample(rng, buffer.len(), n).into_iter().map(|i| buffer[i].clone()).collect();
    let loss = mean_loss(&batch, theta, cfg.objective)?;
    let grad = loss_gradient(&batch, theta, cfg.objective)?;
    theta.add_scaled(&grad, -cfg.learning_rate);
    Ok(loss)
}

/// Outcome of a parametric write.
#[derive(Clone, Debug, PartialEq)]
pub struct WriteReport {
    pub case_id: CaseId,
    /// Mean minibatch loss over the updates, `None` when no update ran.
    pub mean_loss: Option<f64>,
}

/// Appends the case, records `(s, c, r)` for every retrieved case embedding
/// and runs `cfg.steps_per_write` SGD updates over the buffer.
#[allow(clippy::too_many_arguments)]
pub fn parametric_write<R: Rng + ?Sized>(
    bank: &mut CaseBank,
    state: State,
    action: Action,
    reward: f64,
    query_embedding: &[f64],
    retrieved_embeddings: &[&[f64]],
    theta: &mut StepQParams,
    buffer: &mut Vec<LabeledTriple>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<WriteReport> {
    if reward != 0.0 && reward != 1.0 {
        return Err(Error::invalid(format!("single-step reward must be 0 or 1, got {reward}")));
    }
    let case_id = bank.write(state, action, reward)?;
    for c in retrieved_embeddings {
        buffer.push(LabeledTriple { s_embedding: query_embedding.to_vec(), c_embedding: c.to_vec(), r: reward });
    }
    if buffer.is_empty() || cfg.steps_per_write == 0 {
        return Ok(WriteReport { case_id, mean_loss: None });
    }
    let mut total = 0.0;
    for _ in 0..cfg.steps_per_write {
        total += sgd_step(theta, buffer, cfg, rng)?;
    }
    Ok(WriteReport { case_id, mean_loss: Some(total / cfg.steps_per_write as f64) })
}
