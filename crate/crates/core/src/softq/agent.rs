//! The online loop that fine-tunes retrieval with soft Q-learning over a
//! kernel episodic memory: retrieve, reuse, act, retain, store, learn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mmdp::{ActionModel, AgentConfig, CaseBank, CaseId, EpisodicEnv, State};
use crate::params::target_update;
use crate::retrieval::{retrieval_distribution, sample_case, Encoder, RetrievalDistribution};
use crate::softq::{
    ec_td_gradient, ec_td_loss, q_ec_or_default, EcContext, EpisodicMemory, KernelParams, ReplayBuffer, Transition,
};

/// What gets written as the `Q` of a new episodic entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpisodicTarget {
    /// The bootstrapped TD target computed at that step.
    #[default]
    TdTarget,
    /// Discounted return, filled in when the episode ends.
    MonteCarlo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EcAgentConfig {
    pub agent: AgentConfig,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub projection_dim: usize,
    pub initial_log_bandwidth: f64,
    pub episodic_target: EpisodicTarget,
}

impl Default for EcAgentConfig {
    fn default() -> Self {
        EcAgentConfig {
            agent: AgentConfig::default(),
            batch_size: 16,
            replay_capacity: 10_000,
            projection_dim: crate::softq::DEFAULT_PROJECTION_DIM,
            initial_log_bandwidth: 0.0,
            episodic_target: EpisodicTarget::TdTarget,
        }
    }
}

/// Per-step record returned by [`EcAgent::step`].
#[derive(Clone, Debug)]
pub struct StepLog {
    pub transition: Transition,
    /// `None` on a cold start from an empty bank.
    pub distribution: Option<RetrievalDistribution>,
    pub td_target: f64,
    /// Minibatch loss before the gradient step.
    pub loss: f64,
    pub target_updated: bool,
}

pub struct EcAgent<E> {
    cfg: EcAgentConfig,
    pub theta: KernelParams,
    pub theta_bar: KernelParams,
    pub bank: CaseBank,
    pub memory: EpisodicMemory,
    pub replay: ReplayBuffer<Transition>,
    encoder: E,
    rng: ChaCha8Rng,
    current: Option<State>,
    episode: Vec<(usize, f64)>,
}

impl<E: Encoder> EcAgent<E> {
    pub fn new(cfg: EcAgentConfig, encoder: E) -> Result<Self> {
        cfg.agent.validate()?;
        if cfg.batch_size == 0 || cfg.replay_capacity == 0 || cfg.projection_dim == 0 {
            return Err(Error::invalid("batch size, replay capacity and projection dim must be positive"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.agent.seed);
        let theta = KernelParams::random(cfg.projection_dim, encoder.dim(), cfg.initial_log_bandwidth, &mut rng);
        Ok(EcAgent {
            theta_bar: theta.clone(),
            theta,
            bank: CaseBank::new(),
            memory: EpisodicMemory::new(),
            replay: ReplayBuffer::new(cfg.replay_capacity),
            encoder,
            rng,
            current: None,
            episode: Vec::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &EcAgentConfig {
        &self.cfg
    }

    pub fn encoder(&self) -> &E {
        &self.encoder
    }

    fn ctx(&self) -> EcContext<'_> {
        EcContext {
            memory: &self.memory,
            bank: &self.bank,
            encoder: &self.encoder,
            gamma: self.cfg.agent.gamma,
            alpha: self.cfg.agent.alpha,
            target: self.cfg.agent.soft_target(),
        }
    }

    fn attach_embedding(&self, s: State) -> Result<State> {
        if s.embedding().is_some() {
            return Ok(s);
        }
        let e = self.encoder.encode(s.text());
        State::with_embedding(s.text(), e)
    }

    /// `μ_θ(· | s, M)` as a softmax over `Q_EC` (unseen cases read 0).
    pub fn retrieval(&self, state: &State) -> Result<Option<RetrievalDistribution>> {
        if self.bank.is_empty() {
            return Ok(None);
        }
        let s = self.encoder.embed(state);
        let qs = self
            .bank
            .iter()
            .map(|c| Ok((c.id, q_ec_or_default(&s, Some(c.id), &self.memory, &self.theta)?)))
            .collect::<Result<Vec<(CaseId, f64)>>>()?;
        retrieval_distribution(&qs, self.cfg.agent.alpha).map(Some)
    }

    /// One iteration of the training loop at time step `t`.
    pub fn step(&mut self, env: &mut dyn EpisodicEnv, model: &dyn ActionModel, t: u64) -> Result<StepLog> {
        let state = match self.current.take() {
            Some(s) => s,
            None => {
                let s = env.reset(&mut self.rng);
                self.attach_embedding(s)?
            }
        };

        // Retrieve
        let distribution = self.retrieval(&state)?;
        let case_id = distribution.as_ref().map(|d| sample_case(d, &mut self.rng));
        let case = case_id.and_then(|id| self.bank.get(id));

        // Reuse & revise, then act.
        let action = model.sample_action(&state, case, &mut self.rng);
        let outcome = env.step(&state, &action, &mut self.rng)?;
        let next_state = self.attach_embedding(outcome.next_state)?;

        // Retain
        let bank_len = self.bank.len();
        self.bank.write(state.clone(), action, outcome.reward)?;

        let transition = Transition {
            state: state.clone(),
            case: case_id,
            reward: outcome.reward,
            next_state: next_state.clone(),
            bank_len,
            next_bank_len: self.bank.len(),
            terminal: outcome.done,
        };
        self.replay.push(transition.clone());

        let td_target = self.ctx().td_target(&transition, &self.theta_bar)?;
        let embedding = self.encoder.embed(&state).into_owned();
        let entry = self.memory.push(state, embedding, case_id, td_target)?;
        self.episode.push((entry, outcome.reward));
        if outcome.done {
            if self.cfg.episodic_target == EpisodicTarget::MonteCarlo {
                let mut ret = 0.0;
                for &(i, r) in self.episode.iter().rev() {
                    ret = r + self.cfg.agent.gamma * ret;
                    self.memory.set_q(i, ret)?;
                }
            }
            self.episode.clear();
        }

        let batch: Vec<Transition> =
            self.replay.sample(self.cfg.batch_size, &mut self.rng).into_iter().cloned().collect();
        let ctx = self.ctx();
        let loss = ec_td_loss(&batch, &self.theta, &self.theta_bar, &ctx)?;
        let grad = ec_td_gradient(&batch, &self.theta, &self.theta_bar, &ctx)?;
        self.theta.add_scaled(&grad, -self.cfg.agent.eta);

        let target_updated = t.is_multiple_of(self.cfg.agent.k_target_period as u64);
        if target_updated {
            self.theta_bar = target_update(&self.theta_bar, &self.theta, self.cfg.agent.beta)?;
        }

        self.current = if outcome.done { None } else { Some(next_state) };
        Ok(StepLog { transition, distribution, td_target, loss, target_updated })
    }
}

/// Free-function form of [`EcAgent::step`].
pub fn algorithm1_step<E: Encoder>(
    agent: &mut EcAgent<E>,
    env: &mut dyn EpisodicEnv,
    model: &dyn ActionModel,
    t: u64,
) -> Result<StepLog> {
    agent.step(env, model, t)
}
