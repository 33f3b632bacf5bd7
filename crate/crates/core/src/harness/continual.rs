//! Continual learning over repeated passes through a clustered task set,
//! with no memory, similarity retrieval, or a learned case scorer.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cluster::{cluster_env_step, ClusterEnv, ClusterTaskSpec};
use super::mix_seed;
use crate::error::{Error, Result};
use crate::math::{entropy, softmax};
use crate::mmdp::{AgentConfig, Case, CaseBank};
use crate::retrieval::{cosine_similarity, top_k_indices};
use crate::stepq::{parametric_write, StepQParams, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    None,
    Nonparametric,
    Parametric,
}

impl MemoryMode {
    pub const ALL: [MemoryMode; 3] = [MemoryMode::None, MemoryMode::Nonparametric, MemoryMode::Parametric];

    pub fn as_str(self) -> &'static str {
        match self {
            MemoryMode::None => "none",
            MemoryMode::Nonparametric => "nonparametric",
            MemoryMode::Parametric => "parametric",
        }
    }
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MemoryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MemoryMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown memory mode {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualConfig {
    pub memory: MemoryMode,
    pub iterations: usize,
    /// Hidden width of the step-Q network in parametric mode.
    pub hidden: usize,
    pub init: StepQInit,
    /// Parametric mode scores only this many cases nearest by cosine; 0
    /// scores the whole bank.
    pub candidate_pool: usize,
    pub train: TrainConfig,
}

/// Starting point of the step-Q network.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum StepQInit {
    /// Uniform fan-in weights.
    Random,
    /// See [`StepQParams::proximity_init`].
    Proximity { sharpness: f64 },
}

impl Default for ContinualConfig {
    fn default() -> Self {
        ContinualConfig {
            memory: MemoryMode::Parametric,
            iterations: 5,
            hidden: 16,
            init: StepQInit::Random,
            candidate_pool: 16,
            train: TrainConfig { learning_rate: 0.1, ..TrainConfig::default() },
        }
    }
}

impl ContinualConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.memory == MemoryMode::Parametric && self.hidden == 0 {
            return Err(Error::invalid("hidden width must be positive"));
        }
        if self.train.batch_size == 0 || !(self.train.learning_rate.is_finite() && self.train.learning_rate >= 0.0) {
            return Err(Error::invalid("batch size must be positive and the learning rate finite and non-negative"));
        }
        Ok(())
    }
}

/// One pass over the task set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    /// Counted from 1.
    pub iteration: usize,
    pub accuracy: f64,
    pub mean_reward: f64,
    /// Entropy of the softmax over the retrieved cases' scores, averaged
    /// over tasks; 0 when nothing is retrieved.
    pub mean_retrieval_entropy: f64,
    /// Mean training loss of the pass, when training ran.
    pub loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub seed: u64,
    pub mode: MemoryMode,
    pub iterations: Vec<IterationMetrics>,
    pub step_rewards: Vec<u8>,
    pub entropy_trace: Vec<f64>,
    pub losses: Vec<f64>,
    pub wall_clock: Duration,
}

/// Ignores `wall_clock`, which is the only field that varies between
/// identical runs.
impl PartialEq for RunMetrics {
    fn eq(&self, other: &Self) -> bool {
        self.seed == other.seed
            && self.mode == other.mode
            && self.iterations == other.iterations
            && self.step_rewards == other.step_rewards
            && self.entropy_trace == other.entropy_trace
            && self.losses.len() == other.losses.len()
            && self.losses.iter().zip(&other.losses).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl RunMetrics {
    pub fn final_accuracy(&self) -> f64 {
        self.iterations.last().map_or(0.0, |m| m.accuracy)
    }
}

struct Retrieval {
    cases: Vec<Case>,
    entropy: f64,
}

fn retrieve(
    mode: MemoryMode,
    k: usize,
    alpha: f64,
    query: &[f64],
    bank: &CaseBank,
    theta: &StepQParams,
    pool: usize,
) -> Result<Retrieval> {
    if mode == MemoryMode::None || k == 0 || bank.is_empty() {
        return Ok(Retrieval { cases: Vec::new(), entropy: 0.0 });
    }
    let cases = bank.cases();
    let mut candidates: Vec<usize> = (0..cases.len()).collect();
    let mut scores: Vec<f64> = if mode == MemoryMode::Nonparametric || (pool > 0 && pool < cases.len()) {
        cases.iter().map(|c| cosine_similarity(query, case_embedding(c)?)).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    if mode == MemoryMode::Parametric {
        if !scores.is_empty() {
            candidates = top_k_indices(&scores, pool);
            // Ascending ids keep ties resolved towards earlier cases.
            candidates.sort_unstable();
        }
        let pq = theta.project_query(query);
        scores = candidates
            .iter()
            .map(|&i| {
                Ok(crate::math::sigmoid(theta.logit_projected(&pq, &theta.project_case(case_embedding(&cases[i])?))))
            })
            .collect::<Result<_>>()?;
    }
    let picked: Vec<usize> = top_k_indices(&scores, k);
    let chosen: Vec<f64> = picked.iter().map(|&i| scores[i]).collect();
    Ok(Retrieval {
        cases: picked.iter().map(|&i| cases[candidates[i]].clone()).collect(),
        entropy: entropy(&softmax(&chosen, alpha)),
    })
}

fn case_embedding(c: &Case) -> Result<&[f64]> {
    c.state.embedding().ok_or_else(|| Error::MissingData(format!("case {} has no embedding", c.id)))
}

/// Sweeps the task set `cfg.iterations` times. Each pass shuffles the task
/// order, retrieves `agent.k_retrieve` cases per task, evaluates, and writes
/// the finished task back. The draw deciding a task's success is keyed by
/// `(spec.seed, task)`, so every pass and every memory mode faces the same
/// luck and differences come from retrieval alone.
pub fn run_continual_learning(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
) -> Result<RunMetrics> {
    run_continual_with_bank(spec, cfg, agent).map(|(metrics, _)| metrics)
}

/// [`run_continual_learning`], also returning the final case bank.
pub fn run_continual_with_bank(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
) -> Result<(RunMetrics, CaseBank)> {
    cfg.validate()?;
    agent.validate()?;
    let started = Instant::now();
    let env = ClusterEnv::new(spec.clone())?;
    let mut bank = CaseBank::new();
    let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(agent.seed, 0));
    let hidden = if cfg.memory == MemoryMode::Parametric { cfg.hidden } else { 0 };
    let mut theta = match cfg.init {
        StepQInit::Proximity { sharpness } if hidden > 0 => {
            StepQParams::proximity_init(spec.query_dim(), hidden, sharpness, &mut init_rng)?
        }
        _ => StepQParams::init(spec.query_dim(), hidden, &mut init_rng),
    };
    let mut train_rng = ChaCha8Rng::seed_from_u64(mix_seed(agent.seed, 1));
    let mut buffer = Vec::new();

    let n = env.tasks().len();
    let mut iterations = Vec::with_capacity(cfg.iterations);
    let mut step_rewards = Vec::with_capacity(n * cfg.iterations);
    let mut entropy_trace = Vec::with_capacity(n * cfg.iterations);
    let mut losses = Vec::new();

    for it in 0..cfg.iterations {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(agent.seed, 2 + it as u64)));
        let (mut wins, mut entropy_sum, mut loss_sum, mut loss_n) = (0u64, 0.0, 0.0, 0usize);
        for &ti in &order {
            let task = &env.tasks()[ti];
            let query = task.state.embedding().expect("tasks carry embeddings");
            let got = retrieve(cfg.memory, agent.k_retrieve, agent.alpha, query, &bank, &theta, cfg.candidate_pool)?;
            let refs: Vec<&Case> = got.cases.iter().collect();
            let mut luck = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, task.id as u64));
            let outcome = cluster_env_step(&env, task, &refs, &mut luck);
            let reward = f64::from(outcome.reward);
            let state = env.final_state(task, outcome.reward);
            let action = env.action_for(task);
            if cfg.memory == MemoryMode::Parametric {
                let retrieved: Vec<&[f64]> = got.cases.iter().map(case_embedding).collect::<Result<_>>()?;
                let report = parametric_write(
                    &mut bank,
                    state,
                    action,
                    reward,
                    query,
                    &retrieved,
                    &mut theta,
                    &mut buffer,
                    &cfg.train,
                    &mut train_rng,
                )?;
                if let Some(l) = report.mean_loss {
                    losses.push(l);
                    loss_sum += l;
                    loss_n += 1;
                }
            } else {
                bank.write(state, action, reward)?;
            }
            wins += u64::from(outcome.reward);
            entropy_sum += got.entropy;
            step_rewards.push(outcome.reward);
            entropy_trace.push(got.entropy);
        }
        let accuracy = wins as f64 / n as f64;
        iterations.push(IterationMetrics {
            iteration: it + 1,
            accuracy,
            mean_reward: accuracy,
            mean_retrieval_entropy: entropy_sum / n as f64,
            loss: (loss_n > 0).then(|| loss_sum / loss_n as f64),
        });
    }
    let metrics = RunMetrics {
        seed: agent.seed,
        mode: cfg.memory,
        iterations,
        step_rewards,
        entropy_trace,
        losses,
        wall_clock: started.elapsed(),
    };
    Ok((metrics, bank))
}

/// Runs every seed in parallel, using it both for the task set and for the
/// agent. Results come back in `seeds` order.
pub fn run_seeds(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
    seeds: &[u64],
) -> Result<Vec<RunMetrics>> {
    seeds
        .par_iter()
        .map(|&seed| run_continual_learning(&spec.seeded(seed), cfg, &AgentConfig { seed, ..agent.clone() }))
        .collect()
}

/// [`run_seeds`] keeping each run's final bank.
pub fn run_seeds_with_banks(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
    seeds: &[u64],
) -> Result<Vec<(RunMetrics, CaseBank)>> {
    seeds
        .par_iter()
        .map(|&seed| run_continual_with_bank(&spec.seeded(seed), cfg, &AgentConfig { seed, ..agent.clone() }))
        .collect()
}

/// Sample mean and standard deviation (`n − 1` denominator; 0 for one value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Standard error of the difference of two independent sample means.
pub fn pooled_standard_error(a: &[f64], b: &[f64]) -> f64 {
    let (_, sa) = mean_std(a);
    let (_, sb) = mean_std(b);
    (sa * sa / a.len() as f64 + sb * sb / b.len() as f64).sqrt()
}

/// Accuracy per iteration averaged over runs.
pub fn mean_curve(runs: &[RunMetrics]) -> Vec<f64> {
    let iters = runs.first().map_or(0, |r| r.iterations.len());
    (0..iters).map(|i| runs.iter().map(|r| r.iterations[i].accuracy).sum::<f64>() / runs.len() as f64).collect()
}

#[derive(Clone, Debug)]
pub struct KSweepRow {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    /// Final-iteration accuracy per seed.
    pub accuracies: Vec<f64>,
    pub runs: Vec<RunMetrics>,
}

/// One row per `K`, every row over the same seeds.
pub fn k_sweep(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
    k_values: &[usize],
    seeds: &[u64],
) -> Result<Vec<KSweepRow>> {
    if k_values.is_empty() || seeds.is_empty() {
        return Err(Error::invalid("k sweep needs at least one K and one seed"));
    }
    k_values
        .iter()
        .map(|&k| {
            let runs = run_seeds(spec, cfg, &AgentConfig { k_retrieve: k, ..agent.clone() }, seeds)?;
            let accuracies: Vec<f64> = runs.iter().map(RunMetrics::final_accuracy).collect();
            let (mean, std) = mean_std(&accuracies);
            Ok(KSweepRow { k, mean, std, accuracies, runs })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ClusterTaskSpec {
        ClusterTaskSpec { n_clusters: 3, tasks_per_cluster: 8, ..Default::default() }
    }

    #[test]
    fn statistics() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
        let se = pooled_standard_error(&[0.0, 2.0], &[1.0, 1.0]);
        assert!((se - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in MemoryMode::ALL {
            assert_eq!(m.as_str().parse::<MemoryMode>().unwrap(), m);
        }
        assert!("cbr".parse::<MemoryMode>().is_err());
    }

    #[test]
    fn no_memory_is_flat_and_has_no_entropy() {
        let cfg = ContinualConfig { memory: MemoryMode::None, iterations: 3, ..Default::default() };
        let run = run_continual_learning(&tiny(), &cfg, &AgentConfig::default()).unwrap();
        assert_eq!(run.iterations.len(), 3);
        let accs: Vec<f64> = run.iterations.iter().map(|m| m.accuracy).collect();
        assert!(accs.iter().all(|&a| a == accs[0]));
        assert!(run.entropy_trace.iter().all(|&h| h == 0.0));
        assert!(run.iterations.iter().all(|m| m.loss.is_none()));
        assert_eq!(run.step_rewards.len(), 3 * 24);
    }

    #[test]
    fn parametric_run_records_losses_and_repeats_exactly() {
        let cfg = ContinualConfig { iterations: 2, hidden: 8, ..Default::default() };
        let a = run_continual_learning(&tiny(), &cfg, &AgentConfig::default()).unwrap();
        let b = run_continual_learning(&tiny(), &cfg, &AgentConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.iterations.iter().all(|m| m.loss.is_some()));
        assert!(a.iterations.iter().all(|m| (0.0..=1.0).contains(&m.accuracy)));
    }

    #[test]
    fn zero_k_behaves_like_no_memory() {
        let none = ContinualConfig { memory: MemoryMode::None, iterations: 2, ..Default::default() };
        let np = ContinualConfig { memory: MemoryMode::Nonparametric, iterations: 2, ..Default::default() };
        let agent = AgentConfig { k_retrieve: 0, ..Default::default() };
        let a = run_continual_learning(&tiny(), &none, &agent).unwrap();
        let b = run_continual_learning(&tiny(), &np, &agent).unwrap();
        assert_eq!(a.iterations, b.iterations);
    }
}
