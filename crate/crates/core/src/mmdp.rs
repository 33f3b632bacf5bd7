//! Domain model of the memory-based MDP: states, actions, cases, the
//! append-only case bank, trajectories and their probability.

use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::{Arc, RwLock};

use rand::RngCore;

use crate::error::{Error, Result};
use crate::retrieval::RetrievalDistribution;

/// Insertion index of a case inside its bank.
pub type CaseId = u64;

const UNIT_NORM_TOL: f64 = 1e-9;

/// An observation, carried as text. An embedding may be attached when the
/// caller already holds one (for example a scripted environment that places
/// tasks directly in embedding space).
///
/// Equality and hashing look at the text only.
#[derive(Clone)]
pub struct State {
    text: Arc<str>,
    embedding: Option<Arc<[f64]>>,
}

impl State {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text: String = text.into();
        if text.is_empty() {
            return Err(Error::invalid("state text must be non-empty"));
        }
        Ok(State { text: text.into(), embedding: None })
    }

    /// Attaches a precomputed unit-norm embedding.
    pub fn with_embedding(text: impl Into<String>, embedding: Vec<f64>) -> Result<Self> {
        let mut state = State::new(text)?;
        let n = crate::math::norm(&embedding);
        if (n - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::invalid(format!("state embedding norm {n} is not 1")));
        }
        state.embedding = Some(embedding.into());
        Ok(state)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embedding.as_deref()
    }
}

impl PartialEq for State {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for State {}

impl Hash for State {
    fn hash<H: Hasher>(&self, h: &mut H) {
        self.text.hash(h)
    }
}

impl fmt::Debug for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "State({:?})", &*self.text)
    }
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Action {
    text: Arc<str>,
}

impl Action {
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text: String = text.into();
        if text.is_empty() {
            return Err(Error::invalid("action text must be non-empty"));
        }
        Ok(Action { text: text.into() })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Action({:?})", &*self.text)
    }
}

/// One stored experience `(state, action, reward)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Case {
    pub id: CaseId,
    pub state: State,
    pub action: Action,
    pub reward: f64,
}

impl Case {
    /// Same experience content, ignoring the id.
    pub fn same_content(&self, state: &State, action: &Action, reward: f64) -> bool {
        self.state == *state && self.action == *action && self.reward == reward
    }

    pub fn has_binary_reward(&self) -> bool {
        self.reward == 0.0 || self.reward == 1.0
    }
}

/// The memory `M`: an ordered, append-only multiset of cases.
///
/// Snapshots of earlier banks are prefixes, so a bank state along a
/// trajectory is identified by its length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CaseBank {
    cases: Vec<Case>,
}

/// A bank shared between readers and a single appending writer.
pub type SharedCaseBank = Arc<RwLock<CaseBank>>;

impl CaseBank {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds a bank from stored cases. Ids must be strictly increasing
    /// and rewards finite.
    pub fn from_cases(cases: Vec<Case>) -> Result<Self> {
        for pair in cases.windows(2) {
            if pair[1].id <= pair[0].id {
                return Err(Error::Integrity(format!(
                    "case ids not strictly increasing: {} then {}",
                    pair[0].id, pair[1].id
                )));
            }
        }
        if let Some(c) = cases.iter().find(|c| !c.reward.is_finite()) {
            return Err(Error::invalid(format!("case {} has non-finite reward", c.id)));
        }
        Ok(CaseBank { cases })
    }

    /// Appends `(state, action, reward)`; the new id is one past the largest
    /// existing id. Identical content may be written any number of times.
    pub fn write(&mut self, state: State, action: Action, reward: f64) -> Result<CaseId> {
        if !reward.is_finite() {
            return Err(Error::invalid(format!("reward {reward} is not finite")));
        }
        let id = self.next_id();
        self.cases.push(Case { id, state, action, reward });
        Ok(id)
    }

    pub fn next_id(&self) -> CaseId {
        self.cases.last().map_or(0, |c| c.id + 1)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn cases(&self) -> &[Case] {
        &self.cases
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Case> {
        self.cases.iter()
    }

    pub fn get(&self, id: CaseId) -> Option<&Case> {
        self.cases.binary_search_by_key(&id, |c| c.id).ok().map(|i| &self.cases[i])
    }

    /// The bank as it was when it held `len` cases.
    pub fn snapshot(&self, len: usize) -> Result<&[Case]> {
        self.cases
            .get(..len)
            .ok_or_else(|| Error::structural(format!("snapshot of length {len} exceeds bank of {}", self.len())))
    }
}

/// Functional form of [`CaseBank::write`].
pub fn write_case(bank: &CaseBank, state: State, action: Action, reward: f64) -> Result<CaseBank> {
    let mut next = bank.clone();
    next.write(state, action, reward)?;
    Ok(next)
}

/// One decision of a trajectory. `bank_len` names the snapshot `M_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryStep {
    pub bank_len: usize,
    pub state: State,
    pub case: Option<CaseId>,
    pub action: Action,
    pub reward: f64,
}

/// `τ = {M_0, s_0, c_0, a_0, r_0, M_1, ...}`. All snapshots are prefixes of
/// `bank`. `final_state` is the state reached after the last step, if known.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub horizon: usize,
    pub bank: CaseBank,
    pub steps: Vec<TrajectoryStep>,
    pub final_state: Option<State>,
}

/// Case retrieval policy `μ(c | s, M)`.
pub trait RetrievalPolicy {
    /// Distribution over the ids in `bank`; `bank` is never empty.
    fn distribution(&self, state: &State, bank: &[Case]) -> Result<RetrievalDistribution>;
}

/// The fixed action model `p(a | s, c)` that reuses a retrieved case.
/// `case` is `None` when the bank was empty.
pub trait ActionModel {
    fn action_prob(&self, state: &State, case: Option<&Case>, action: &Action) -> f64;
    fn sample_action(&self, state: &State, case: Option<&Case>, rng: &mut dyn RngCore) -> Action;
}

/// Environment with a deterministic reward and enumerable transitions.
pub trait FiniteEnv {
    fn reward(&self, state: &State, action: &Action) -> Result<f64>;
    fn transition_prob(&self, state: &State, action: &Action, next: &State) -> f64;
}

/// Result of one environment step.
#[derive(Clone, Debug)]
pub struct EnvStep {
    pub reward: f64,
    pub next_state: State,
    /// The episode ended; the next step starts from `reset`.
    pub done: bool,
}

/// An environment that can be rolled forward.
pub trait EpisodicEnv {
    fn reset(&mut self, rng: &mut dyn RngCore) -> State;
    fn step(&mut self, state: &State, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep>;
}

/// `log p(τ)` under retrieve / reuse / evaluate / retain / transition.
///
/// Returns `-inf` when the recorded reward disagrees with the environment or
/// the bank was not updated by exactly appending `(s_t, a_t, r_t)`.
pub fn trajectory_logprob(
    traj: &Trajectory,
    retrieval: &dyn RetrievalPolicy,
    action_model: &dyn ActionModel,
    env: &dyn FiniteEnv,
) -> Result<f64> {
    if traj.steps.len() > traj.horizon {
        return Err(Error::structural(format!(
            "trajectory has {} steps but horizon {}",
            traj.steps.len(),
            traj.horizon
        )));
    }
    let mut logp = 0.0;
    for (t, step) in traj.steps.iter().enumerate() {
        let snapshot = traj.bank.snapshot(step.bank_len)?;

        let case = match step.case {
            None if snapshot.is_empty() => None,
            None => return Err(Error::structural(format!("step {t}: no case retrieved from a non-empty bank"))),
            Some(id) => {
                let case = snapshot
                    .iter()
                    .find(|c| c.id == id)
                    .ok_or_else(|| Error::structural(format!("step {t}: case {id} is not in the bank snapshot")))?;
                let dist = retrieval.distribution(&step.state, snapshot)?;
                logp += dist.prob_of(id).ln();
                Some(case)
            }
        };

        logp += action_model.action_prob(&step.state, case, &step.action).ln();

        if env.reward(&step.state, &step.action)? != step.reward {
            return Ok(f64::NEG_INFINITY);
        }

        let retained = traj
            .bank
            .cases()
            .get(step.bank_len)
            .is_some_and(|c| c.same_content(&step.state, &step.action, step.reward));
        let next_len_ok = traj.steps.get(t + 1).is_none_or(|n| n.bank_len == step.bank_len + 1);
        if !retained || !next_len_ok {
            return Ok(f64::NEG_INFINITY);
        }

        let next_state = traj.steps.get(t + 1).map(|n| &n.state).or(traj.final_state.as_ref());
        if let Some(next) = next_state {
            logp += env.transition_prob(&step.state, &step.action, next).ln();
        }
        if logp == f64::NEG_INFINITY {
            return Ok(logp);
        }
    }
    Ok(logp)
}

/// Undiscounted `Σ_t [r_t + α H_t]`.
pub fn entropy_regularized_return(traj: &Trajectory, per_step_entropy: &[f64], alpha: f64) -> Result<f64> {
    if per_step_entropy.len() != traj.steps.len() {
        return Err(Error::structural(format!("{} entropies for {} steps", per_step_entropy.len(), traj.steps.len())));
    }
    Ok(traj.steps.iter().zip(per_step_entropy).map(|(s, h)| s.reward + alpha * h).sum())
}

/// Hyper-parameters shared by the learning agents.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// Entropy weight.
    pub alpha: f64,
    pub gamma: f64,
    /// Learning rate.
    pub eta: f64,
    /// Number of cases handed to the action model.
    pub k_retrieve: usize,
    /// Steps between target-parameter refreshes.
    pub k_target_period: usize,
    /// Target averaging weight; 1 keeps the target frozen.
    pub beta: f64,
    pub seed: u64,
    /// Bootstrap with `α log Σ exp(Q)` in place of `α log Σ exp(Q / α)`.
    pub unscaled_soft_target: bool,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 1.0,
            gamma: 0.9,
            eta: 0.05,
            k_retrieve: 4,
            k_target_period: 10,
            beta: 0.9,
            seed: 0,
            unscaled_soft_target: false,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.alpha.is_finite()
            && (0.0..1.0).contains(&self.gamma)
            && self.eta > 0.0
            && self.eta.is_finite()
            && self.k_target_period >= 1
            && (0.0..=1.0).contains(&self.beta);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("agent config out of range: {self:?}")))
        }
    }

    pub fn soft_target(&self) -> crate::softq::SoftTarget {
        if self.unscaled_soft_target {
            crate::softq::SoftTarget::Unscaled
        } else {
            crate::softq::SoftTarget::Scaled
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(t: &str) -> State {
        State::new(t).unwrap()
    }

    fn act(t: &str) -> Action {
        Action::new(t).unwrap()
    }

    #[test]
    fn first_write_gets_id_zero() {
        let mut bank = CaseBank::new();
        assert_eq!(bank.write(st("q"), act("a"), 1.0).unwrap(), 0);
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn duplicates_are_kept_with_distinct_ids() {
        let mut bank = CaseBank::new();
        let a = bank.write(st("q"), act("a"), 1.0).unwrap();
        let b = bank.write(st("q"), act("a"), 1.0).unwrap();
        assert_ne!(a, b);
        assert_eq!(bank.len(), 2);
    }

    #[test]
    fn ids_follow_insertion_order() {
        let mut bank = CaseBank::new();
        for (i, t) in ["x", "y", "z"].iter().enumerate() {
            assert_eq!(bank.write(st(t), act("a"), 0.0).unwrap(), i as u64);
        }
        let ids: Vec<_> = bank.iter().map(|c| c.id).collect();
        assert_eq!(ids, vec![0, 1, 2]);
    }

    #[test]
    fn non_finite_reward_is_rejected_without_mutation() {
        let mut bank = CaseBank::new();
        bank.write(st("q"), act("a"), 0.0).unwrap();
        for r in [f64::NAN, f64::INFINITY] {
            assert!(matches!(bank.write(st("q"), act("a"), r), Err(Error::InvalidInput(_))));
        }
        assert_eq!(bank.len(), 1);
    }

    #[test]
    fn write_case_leaves_the_original_untouched() {
        let bank = CaseBank::new();
        let next = write_case(&bank, st("q"), act("a"), 1.0).unwrap();
        assert!(bank.is_empty());
        assert_eq!(next.len(), 1);
    }

    #[test]
    fn from_cases_rejects_unordered_ids() {
        let c = |id| Case { id, state: st("s"), action: act("a"), reward: 0.0 };
        assert!(CaseBank::from_cases(vec![c(0), c(3), c(7)]).is_ok());
        assert!(matches!(CaseBank::from_cases(vec![c(1), c(1)]), Err(Error::Integrity(_))));
        assert_eq!(CaseBank::from_cases(vec![c(0), c(3)]).unwrap().next_id(), 4);
    }

    #[test]
    fn empty_text_is_invalid() {
        assert!(State::new("").is_err());
        assert!(Action::new("").is_err());
    }

    #[test]
    fn embedding_must_be_unit_norm() {
        assert!(State::with_embedding("s", vec![0.6, 0.8]).is_ok());
        assert!(State::with_embedding("s", vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn config_ranges_are_enforced() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = [
            AgentConfig { alpha: 0.0, ..Default::default() },
            AgentConfig { gamma: 1.0, ..Default::default() },
            AgentConfig { eta: 0.0, ..Default::default() },
            AgentConfig { k_target_period: 0, ..Default::default() },
            AgentConfig { beta: 1.5, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn entropy_return_checks_lengths() {
        let traj = Trajectory {
            horizon: 2,
            bank: CaseBank::new(),
            steps: vec![TrajectoryStep { bank_len: 0, state: st("s"), case: None, action: act("a"), reward: 1.5 }],
            final_state: None,
        };
        assert_eq!(entropy_regularized_return(&traj, &[0.3], 0.0).unwrap(), 1.5);
        assert!((entropy_regularized_return(&traj, &[0.5], 2.0).unwrap() - 2.5).abs() < 1e-15);
        assert!(matches!(entropy_regularized_return(&traj, &[], 1.0), Err(Error::Structural(_))));
    }
}
