//! Episodic-control estimate `Q_EC(s, c) = Σ_i w_i Q_i` over the episodic
//! entries that retrieved `c`, with weights from a learnable Gaussian kernel
//! `k_θ(s, s') = exp(−‖W e(s) − W e(s')‖² / h)`.

use std::collections::HashMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::math;
use crate::mmdp::{CaseBank, CaseId, State};
use crate::params::{take, Parameters, Tensor};
use crate::retrieval::Encoder;
use crate::softq::{soft_value, SoftTarget, Transition};

pub const DEFAULT_PROJECTION_DIM: usize = 32;

/// `θ = (W, log h)`. `w` is row-major `proj_dim × input_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelParams {
    proj_dim: usize,
    input_dim: usize,
    pub w: Vec<f64>,
    pub log_bandwidth: f64,
}

impl KernelParams {
    pub fn new(proj_dim: usize, input_dim: usize, w: Vec<f64>, log_bandwidth: f64) -> Result<Self> {
        if w.len() != proj_dim * input_dim {
            return Err(Error::structural(format!("W has {} entries, expected {proj_dim}×{input_dim}", w.len())));
        }
        if !log_bandwidth.is_finite() || w.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("kernel parameters must be finite"));
        }
        Ok(KernelParams { proj_dim, input_dim, w, log_bandwidth })
    }

    pub fn zeros(proj_dim: usize, input_dim: usize) -> Self {
        KernelParams { proj_dim, input_dim, w: vec![0.0; proj_dim * input_dim], log_bandwidth: 0.0 }
    }

    /// Square identity projection with bandwidth `h`.
    pub fn identity(dim: usize, bandwidth: f64) -> Self {
        let mut p = Self::zeros(dim, dim);
        for i in 0..dim {
            p.w[i * dim + i] = 1.0;
        }
        p.log_bandwidth = bandwidth.ln();
        p
    }

    /// Gaussian-like random projection scaled so that `‖W e‖ ≈ ‖e‖`.
    pub fn random<R: Rng + ?Sized>(proj_dim: usize, input_dim: usize, log_bandwidth: f64, rng: &mut R) -> Self {
        let a = (3.0 / proj_dim as f64).sqrt();
        let w = (0..proj_dim * input_dim).map(|_| rng.gen_range(-a..a)).collect();
        KernelParams { proj_dim, input_dim, w, log_bandwidth }
    }

    pub fn proj_dim(&self) -> usize {
        self.proj_dim
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.log_bandwidth.exp()
    }

    pub fn project(&self, e: &[f64]) -> Vec<f64> {
        self.w.chunks_exact(self.input_dim).map(|row| math::dot(row, e)).collect()
    }

    /// `log k_θ(e1, e2) = −‖W (e1 − e2)‖² / h`.
    pub fn log_kernel(&self, e1: &[f64], e2: &[f64]) -> f64 {
        let delta: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).collect();
        let pd = self.project(&delta);
        -math::dot(&pd, &pd) / self.bandwidth()
    }

    /// `∇_θ log k_θ(e1, e2)`.
    fn log_kernel_grad(&self, e1: &[f64], e2: &[f64]) -> KernelParams {
        let delta: Vec<f64> = e1.iter().zip(e2).map(|(a, b)| a - b).collect();
        let pd = self.project(&delta);
        let inv_h = 1.0 / self.bandwidth();
        let mut g = KernelParams::zeros(self.proj_dim, self.input_dim);
        for (r, row) in g.w.chunks_exact_mut(self.input_dim).enumerate() {
            let coef = -2.0 * inv_h * pd[r];
            for (x, d) in row.iter_mut().zip(&delta) {
                *x = coef * d;
            }
        }
        g.log_bandwidth = math::dot(&pd, &pd) * inv_h;
        g
    }

    pub(crate) fn add_scaled(&mut self, other: &KernelParams, scale: f64) {
        for (a, b) in self.w.iter_mut().zip(&other.w) {
            *a += scale * b;
        }
        self.log_bandwidth += scale * other.log_bandwidth;
    }

    fn check_input(&self, e: &[f64]) -> Result<()> {
        if e.len() != self.input_dim {
            return Err(Error::structural(format!(
                "embedding of length {} for kernel input {}",
                e.len(),
                self.input_dim
            )));
        }
        Ok(())
    }
}

impl Parameters for KernelParams {
    fn to_tensors(&self) -> Vec<Tensor> {
        vec![
            Tensor { name: "kernel.w".into(), shape: vec![self.proj_dim, self.input_dim], data: self.w.clone() },
            Tensor::scalar("kernel.log_bandwidth", self.log_bandwidth),
        ]
    }

    fn from_tensors(tensors: &[Tensor]) -> Result<Self> {
        let w = take(tensors, "kernel.w")?;
        let h = take(tensors, "kernel.log_bandwidth")?;
        if w.shape.len() != 2 || h.data.len() != 1 {
            return Err(Error::structural("kernel tensors have the wrong rank"));
        }
        KernelParams::new(w.shape[0], w.shape[1], w.data.clone(), h.data[0])
    }
}

/// `k_θ(s, s')` on encoded states.
pub fn kernel(theta: &KernelParams, s: &State, s_prime: &State, encoder: &dyn Encoder) -> f64 {
    theta.log_kernel(&encoder.embed(s), &encoder.embed(s_prime)).exp()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodicEntry {
    pub state: State,
    pub embedding: Vec<f64>,
    pub case: Option<CaseId>,
    pub q: f64,
}

/// `D = {(s, c, Q)}`, bucketed by retrieved case.
#[derive(Clone, Debug, Default)]
pub struct EpisodicMemory {
    entries: Vec<EpisodicEntry>,
    buckets: HashMap<Option<CaseId>, Vec<usize>>,
}

impl EpisodicMemory {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends an entry and returns its index.
    pub fn push(&mut self, state: State, embedding: Vec<f64>, case: Option<CaseId>, q: f64) -> Result<usize> {
        if !q.is_finite() {
            return Err(Error::invalid(format!("episodic Q {q} is not finite")));
        }
        let i = self.entries.len();
        self.entries.push(EpisodicEntry { state, embedding, case, q });
        self.buckets.entry(case).or_default().push(i);
        Ok(i)
    }

    pub fn set_q(&mut self, index: usize, q: f64) -> Result<()> {
        if !q.is_finite() {
            return Err(Error::invalid(format!("episodic Q {q} is not finite")));
        }
        self.entries[index].q = q;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[EpisodicEntry] {
        &self.entries
    }

    /// Indices of `D_c`.
    pub fn bucket(&self, case: Option<CaseId>) -> &[usize] {
        self.buckets.get(&case).map_or(&[], Vec::as_slice)
    }
}

/// Normalised kernel weights over `D_c` and the resulting estimate.
fn weights(
    theta: &KernelParams,
    s: &[f64],
    mem: &EpisodicMemory,
    case: Option<CaseId>,
) -> Result<(Vec<usize>, Vec<f64>, f64)> {
    theta.check_input(s)?;
    let idx = mem.bucket(case);
    if idx.is_empty() {
        return Err(Error::MissingData(format!("no episodic entries for case {case:?}")));
    }
    let logk: Vec<f64> = idx.iter().map(|&i| theta.log_kernel(s, &mem.entries[i].embedding)).collect();
    // Softmax over log-kernels so that tiny kernels do not underflow to 0/0.
    let w = math::softmax(&logk, 1.0);
    let f = idx.iter().zip(&w).map(|(&i, wi)| wi * mem.entries[i].q).sum();
    Ok((idx.to_vec(), w, f))
}

/// Kernel-weighted average of the Q values in `D_c`.
pub fn q_ec_estimate(s: &[f64], case: Option<CaseId>, mem: &EpisodicMemory, theta: &KernelParams) -> Result<f64> {
    weights(theta, s, mem, case).map(|(_, _, f)| f)
}

/// As [`q_ec_estimate`], reading 0 for a case nobody has retrieved yet.
pub fn q_ec_or_default(s: &[f64], case: Option<CaseId>, mem: &EpisodicMemory, theta: &KernelParams) -> Result<f64> {
    match q_ec_estimate(s, case, mem, theta) {
        Err(Error::MissingData(_)) => Ok(0.0),
        other => other,
    }
}

/// Everything the EC TD loss reads besides the parameters and the batch.
#[derive(Clone, Copy)]
pub struct EcContext<'a> {
    pub memory: &'a EpisodicMemory,
    pub bank: &'a CaseBank,
    pub encoder: &'a dyn Encoder,
    pub gamma: f64,
    pub alpha: f64,
    pub target: SoftTarget,
}

impl EcContext<'_> {
    /// `y = r + γ V_θ̄(s', M')`, or `r` for a terminal transition.
    pub fn td_target(&self, t: &Transition, theta_bar: &KernelParams) -> Result<f64> {
        if t.terminal {
            return Ok(t.reward);
        }
        let next = self.encoder.embed(&t.next_state);
        let qs = t
            .next_candidates(self.bank)?
            .into_iter()
            .map(|c| q_ec_or_default(&next, c, self.memory, theta_bar))
            .collect::<Result<Vec<_>>>()?;
        Ok(t.reward + self.gamma * soft_value(&qs, self.alpha, self.target)?)
    }
}

fn non_empty(batch: &[Transition]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::invalid("TD loss of an empty batch"));
    }
    Ok(())
}

/// Mean `(f_θ(s, c) − y)²`, with `y` from the target parameters.
pub fn ec_td_loss(
    batch: &[Transition],
    theta: &KernelParams,
    theta_bar: &KernelParams,
    ctx: &EcContext<'_>,
) -> Result<f64> {
    non_empty(batch)?;
    let mut total = 0.0;
    for t in batch {
        let f = q_ec_estimate(&ctx.encoder.embed(&t.state), t.case, ctx.memory, theta)?;
        let y = ctx.td_target(t, theta_bar)?;
        total += (f - y) * (f - y);
    }
    Ok(total / batch.len() as f64)
}

/// `2 E[(f_θ − y) Σ_i w_i (Q_i − f_θ) ∇_θ log k_θ(s, s_i)]`, with `θ̄` fixed.
pub fn ec_td_gradient(
    batch: &[Transition],
    theta: &KernelParams,
    theta_bar: &KernelParams,
    ctx: &EcContext<'_>,
) -> Result<KernelParams> {
    non_empty(batch)?;
    let mut grad = KernelParams::zeros(theta.proj_dim, theta.input_dim);
    for t in batch {
        let s = ctx.encoder.embed(&t.state);
        let (idx, w, f) = weights(theta, &s, ctx.memory, t.case)?;
        let y = ctx.td_target(t, theta_bar)?;
        let outer = 2.0 * (f - y) / batch.len() as f64;
        for (&i, wi) in idx.iter().zip(&w) {
            let entry = &ctx.memory.entries[i];
            let coef = outer * wi * (entry.q - f);
            if coef != 0.0 {
                grad.add_scaled(&theta.log_kernel_grad(&s, &entry.embedding), coef);
            }
        }
    }
    Ok(grad)
}
