//! A clustered-task bandit standing in for an agent whose success depends on
//! having seen a successful solution to a similar problem.
//!
//! Tasks are noisy unit vectors around random cluster centres. A query
//! embedding carries one extra coordinate, zero for an open task. When a
//! solved or failed task is written back, that coordinate holds `±λ`, so
//! cosine similarity to a query ignores the outcome while a learned scorer can
//! still read it.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::normalize;
use crate::mmdp::{Action, Case, State};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterTaskSpec {
    pub n_clusters: usize,
    pub tasks_per_cluster: usize,
    /// Per-coordinate standard deviation around the cluster centre.
    pub embedding_noise: f64,
    pub p_match: f64,
    pub p_mismatch: f64,
    pub seed: u64,
    pub embedding_dim: usize,
    /// Magnitude `λ` of the outcome coordinate on written cases.
    pub outcome_weight: f64,
}

impl Default for ClusterTaskSpec {
    fn default() -> Self {
        ClusterTaskSpec {
            n_clusters: 8,
            tasks_per_cluster: 64,
            embedding_noise: 0.1,
            p_match: 0.85,
            p_mismatch: 0.55,
            seed: 0,
            embedding_dim: 16,
            outcome_weight: 1.0,
        }
    }
}

impl ClusterTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.tasks_per_cluster == 0 || self.embedding_dim == 0 {
            return Err(Error::invalid("cluster counts and embedding dimension must be positive"));
        }
        if !(0.0 <= self.p_mismatch && self.p_mismatch <= self.p_match && self.p_match <= 1.0) {
            return Err(Error::invalid(format!(
                "need 0 <= p_mismatch ({}) <= p_match ({}) <= 1",
                self.p_mismatch, self.p_match
            )));
        }
        if !(self.embedding_noise >= 0.0 && self.embedding_noise.is_finite()) {
            return Err(Error::invalid("embedding noise must be finite and non-negative"));
        }
        if !(self.outcome_weight >= 0.0 && self.outcome_weight.is_finite()) {
            return Err(Error::invalid("outcome weight must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn seeded(&self, seed: u64) -> Self {
        ClusterTaskSpec { seed, ..self.clone() }
    }

    pub fn n_tasks(&self) -> usize {
        self.n_clusters * self.tasks_per_cluster
    }

    /// Length of query and case embeddings.
    pub fn query_dim(&self) -> usize {
        self.embedding_dim + 1
    }
}

#[derive(Clone, Debug)]
pub struct ClusterTask {
    pub id: usize,
    pub cluster: usize,
    /// Unit vector in `embedding_dim` dimensions.
    pub embedding: Vec<f64>,
    /// The open task, embedded with a zero outcome coordinate.
    pub state: State,
}

/// What happened on one step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub reward: u8,
    /// A retrieved case was a success from the task's own cluster.
    pub matched: bool,
}

/// The generated task set together with its spec.
#[derive(Clone, Debug)]
pub struct ClusterEnv {
    spec: ClusterTaskSpec,
    tasks: Vec<ClusterTask>,
    by_text: HashMap<String, usize>,
}

impl ClusterEnv {
    pub fn new(spec: ClusterTaskSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let d = spec.embedding_dim;
        let centers: Vec<Vec<f64>> = (0..spec.n_clusters)
            .map(|_| {
                let mut c = gaussian(&mut rng, d, 1.0);
                normalize(&mut c);
                c
            })
            .collect();
        let mut tasks = Vec::with_capacity(spec.n_tasks());
        for (cluster, center) in centers.iter().enumerate() {
            for _ in 0..spec.tasks_per_cluster {
                let noise = gaussian(&mut rng, d, spec.embedding_noise);
                let mut e: Vec<f64> = center.iter().zip(&noise).map(|(c, n)| c + n).collect();
                if normalize(&mut e) == 0.0 {
                    e = center.clone();
                }
                let id = tasks.len();
                let mut query = e.clone();
                query.push(0.0);
                let state = State::with_embedding(format!("task {id}"), query)?;
                tasks.push(ClusterTask { id, cluster, embedding: e, state });
            }
        }
        let by_text = tasks.iter().map(|t| (t.state.text().to_string(), t.id)).collect();
        Ok(ClusterEnv { spec, tasks, by_text })
    }

    pub fn spec(&self) -> &ClusterTaskSpec {
        &self.spec
    }

    pub fn tasks(&self) -> &[ClusterTask] {
        &self.tasks
    }

    /// The task a written case came from.
    pub fn source_task(&self, case: &Case) -> Option<&ClusterTask> {
        let text = case.state.text();
        let task_text = text.split_once(" || ").map_or(text, |(t, _)| t);
        self.by_text.get(task_text).map(|&i| &self.tasks[i])
    }

    pub fn action_for(&self, task: &ClusterTask) -> Action {
        Action::new(format!("solve task {}", task.id)).expect("non-empty")
    }

    /// The state stored in the bank once the task is finished: the final
    /// observation, including its outcome.
    pub fn final_state(&self, task: &ClusterTask, reward: u8) -> State {
        let (label, sign) = if reward == 1 { ("solved", 1.0) } else { ("unsolved", -1.0) };
        let mut e = task.embedding.clone();
        e.push(sign * self.spec.outcome_weight);
        normalize(&mut e);
        State::with_embedding(format!("task {} || outcome: {label}", task.id), e).expect("unit norm")
    }
}

fn gaussian(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Scripted action model plus evaluator: success with `p_match` when some
/// retrieved case is a success from the task's cluster, `p_mismatch`
/// otherwise.
pub fn cluster_env_step<R: Rng + ?Sized>(
    env: &ClusterEnv,
    task: &ClusterTask,
    retrieved: &[&Case],
    rng: &mut R,
) -> StepOutcome {
    let matched =
        retrieved.iter().any(|c| c.reward == 1.0 && env.source_task(c).is_some_and(|t| t.cluster == task.cluster));
    let p = if matched { env.spec.p_match } else { env.spec.p_mismatch };
    let u: f64 = rng.gen();
    StepOutcome { reward: u8::from(u < p), matched }
}
