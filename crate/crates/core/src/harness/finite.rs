//! Tiny memory-based MDPs that can be solved exactly.
//!
//! States are named `s0, s1, ...` and actions `a0, a1, ...`. Because rewards
//! are a deterministic function of `(s, a)` and the bank only ever grows by
//! appending `(s_t, a_t, r_t)`, the reachable `(s, M)` pairs form a finite
//! layered graph. Banks are canonicalised by sorting their case contents; the
//! sort keeps duplicates, which matter because every copy is a separate
//! retrieval candidate.

use std::collections::{HashMap, HashSet};

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::mmdp::{Action, ActionModel, Case, CaseBank, EnvStep, EpisodicEnv, FiniteEnv, RetrievalPolicy, State};
use crate::mmdp::{Trajectory, TrajectoryStep};
use crate::retrieval::{retrieval_distribution, RetrievalDistribution};
use crate::softq::{soft_value, tabular_td_update, QTable, SoftTarget, TdParams};

pub const MAX_STATES: usize = 4;
pub const MAX_ACTIONS: usize = 3;
pub const MAX_HORIZON: usize = 3;
pub const MAX_SEEDED_CASES: usize = 2;
/// Largest reachable `(s, M)` set the oracle will enumerate.
pub const MAX_REACHABLE: usize = 10_000;

const ROW_TOL: f64 = 1e-12;

/// Content of a case, with the reward kept as raw bits so it can be hashed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CaseContent {
    pub state: usize,
    pub action: usize,
    reward_bits: u64,
}

impl CaseContent {
    pub fn new(state: usize, action: usize, reward: f64) -> Self {
        // Normalise -0.0 so equal rewards hash equally.
        let reward = if reward == 0.0 { 0.0 } else { reward };
        CaseContent { state, action, reward_bits: reward.to_bits() }
    }

    pub fn reward(&self) -> f64 {
        f64::from_bits(self.reward_bits)
    }

    /// Reads the content back out of a bank case.
    pub fn of_case(case: &Case) -> Result<Self> {
        Ok(CaseContent::new(parse_index(case.state.text(), 's')?, parse_index(case.action.text(), 'a')?, case.reward))
    }
}

/// A bank as a sorted multiset of contents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BankKey(Vec<CaseContent>);

impl BankKey {
    pub fn new(mut contents: Vec<CaseContent>) -> Self {
        contents.sort_unstable();
        BankKey(contents)
    }

    pub fn of_cases(cases: &[Case]) -> Result<Self> {
        Ok(BankKey::new(cases.iter().map(CaseContent::of_case).collect::<Result<_>>()?))
    }

    pub fn contents(&self) -> &[CaseContent] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn with(&self, c: CaseContent) -> BankKey {
        let mut v = self.0.clone();
        let at = v.partition_point(|x| *x <= c);
        v.insert(at, c);
        BankKey(v)
    }

    /// Every retrieval candidate, one per copy; `[None]` for an empty bank.
    pub fn candidates(&self) -> Vec<Option<CaseContent>> {
        if self.0.is_empty() {
            vec![None]
        } else {
            self.0.iter().copied().map(Some).collect()
        }
    }

    pub fn distinct_candidates(&self) -> Vec<Option<CaseContent>> {
        let mut c = self.candidates();
        c.dedup();
        c
    }
}

/// Key of a soft Q value: `(s, M, c)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct QKey {
    pub state: usize,
    pub bank: BankKey,
    pub case: Option<CaseContent>,
}

/// A finite memory-based MDP with a tabulated action model.
///
/// `action_model[s][slot]` is the distribution over actions when the
/// retrieved case occupies `slot`: slot 0 is the null case of an empty bank,
/// slot `1 + s_c * n_actions + a_c` a case of content `(s_c, a_c, ·)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteMmdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transitions[s][a][s']`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `rewards[s][a]`.
    pub rewards: Vec<Vec<f64>>,
    pub horizon: usize,
    pub gamma: f64,
    pub initial_state: usize,
    pub initial_bank: Vec<CaseContent>,
    pub action_model: Vec<Vec<Vec<f64>>>,
}

impl FiniteMmdpSpec {
    /// Builds the action model "copy the retrieved case's action with
    /// probability `imitate`, spread the rest evenly; uniform for no case".
    #[allow(clippy::too_many_arguments)]
    pub fn imitating(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<f64>>,
        horizon: usize,
        gamma: f64,
        initial_state: usize,
        initial_bank: Vec<CaseContent>,
        imitate: f64,
    ) -> Result<Self> {
        let n_states = transitions.len();
        let n_actions = transitions.first().map_or(0, Vec::len);
        if n_actions < 2 {
            return Err(Error::invalid("an imitating action model needs at least two actions"));
        }
        let rest = (1.0 - imitate) / (n_actions - 1) as f64;
        let mut rows = vec![vec![1.0 / n_actions as f64; n_actions]];
        for _ in 0..n_states {
            for a in 0..n_actions {
                let mut row = vec![rest; n_actions];
                row[a] = imitate;
                rows.push(row);
            }
        }
        let spec = FiniteMmdpSpec {
            n_states,
            n_actions,
            transitions,
            rewards,
            horizon,
            gamma,
            initial_state,
            initial_bank,
            action_model: vec![rows; n_states],
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (ns, na) = (self.n_states, self.n_actions);
        if ns == 0 || ns > MAX_STATES || na == 0 || na > MAX_ACTIONS {
            return Err(Error::invalid(format!("{ns} states and {na} actions is out of range")));
        }
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(Error::invalid(format!("horizon {} out of range", self.horizon)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma {} not in [0, 1)", self.gamma)));
        }
        if self.initial_state >= ns {
            return Err(Error::invalid("initial state out of range"));
        }
        if self.initial_bank.len() > MAX_SEEDED_CASES {
            return Err(Error::invalid("too many seeded cases"));
        }
        if self.initial_bank.iter().any(|c| c.state >= ns || c.action >= na || !c.reward().is_finite()) {
            return Err(Error::invalid("seeded case out of range"));
        }
        check_shape(&self.rewards, ns, "rewards")?;
        for row in &self.rewards {
            if row.len() != na || row.iter().any(|r| !r.is_finite()) {
                return Err(Error::invalid("reward table must be finite S×A"));
            }
        }
        check_shape(&self.transitions, ns, "transitions")?;
        for per_s in &self.transitions {
            check_shape(per_s, na, "transitions")?;
            for row in per_s {
                check_distribution(row, ns, "transition")?;
            }
        }
        check_shape(&self.action_model, ns, "action model")?;
        for per_s in &self.action_model {
            check_shape(per_s, 1 + ns * na, "action model")?;
            for row in per_s {
                check_distribution(row, na, "action model")?;
            }
        }
        Ok(())
    }

    pub fn state(&self, i: usize) -> State {
        State::new(format!("s{i}")).expect("non-empty")
    }

    pub fn action(&self, i: usize) -> Action {
        Action::new(format!("a{i}")).expect("non-empty")
    }

    pub fn initial_bank_key(&self) -> BankKey {
        BankKey::new(self.initial_bank.clone())
    }

    /// The seeded cases as a real bank.
    pub fn initial_case_bank(&self) -> CaseBank {
        let mut bank = CaseBank::new();
        for c in &self.initial_bank {
            bank.write(self.state(c.state), self.action(c.action), c.reward()).expect("validated reward");
        }
        bank
    }

    pub fn action_probs(&self, s: usize, case: Option<CaseContent>) -> &[f64] {
        let slot = case.map_or(0, |c| 1 + c.state * self.n_actions + c.action);
        &self.action_model[s][slot]
    }

    /// Every `(a, s', probability)` with positive probability.
    pub fn outcomes(&self, s: usize, case: Option<CaseContent>) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, &pa) in self.action_probs(s, case).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (next, &pn) in self.transitions[s][a].iter().enumerate() {
                if pn > 0.0 {
                    out.push((a, next, pa * pn));
                }
            }
        }
        out
    }

    /// Reachable `(s, M)` pairs, one layer per decision step.
    pub fn reachable(&self) -> Result<Vec<Vec<(usize, BankKey)>>> {
        self.validate()?;
        let mut layers = vec![vec![(self.initial_state, self.initial_bank_key())]];
        let mut total = 1;
        for _ in 1..self.horizon {
            let mut seen = HashSet::new();
            let mut next = Vec::new();
            for (s, bank) in layers.last().expect("non-empty") {
                for c in bank.distinct_candidates() {
                    for (a, s2, _) in self.outcomes(*s, c) {
                        let key = (s2, bank.with(CaseContent::new(*s, a, self.rewards[*s][a])));
                        if seen.insert(key.clone()) {
                            next.push(key);
                        }
                    }
                }
            }
            total += next.len();
            if total > MAX_REACHABLE {
                return Err(Error::Capacity(format!("more than {MAX_REACHABLE} reachable (s, M) pairs")));
            }
            next.sort();
            layers.push(next);
        }
        Ok(layers)
    }
}

fn check_shape<T>(rows: &[T], n: usize, what: &str) -> Result<()> {
    if rows.len() != n {
        return Err(Error::invalid(format!("{what} table has {} rows, expected {n}", rows.len())));
    }
    Ok(())
}

fn check_distribution(row: &[f64], n: usize, what: &str) -> Result<()> {
    let sum: f64 = row.iter().sum();
    if row.len() != n || row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > ROW_TOL {
        return Err(Error::invalid(format!("{what} row {row:?} is not a distribution")));
    }
    Ok(())
}

fn parse_index(text: &str, prefix: char) -> Result<usize> {
    text.strip_prefix(prefix)
        .and_then(|n| n.parse().ok())
        .ok_or_else(|| Error::invalid(format!("{text:?} is not a {prefix}<index> name")))
}

/// Exact `Q*(s, M, c)` for every reachable key.
#[derive(Clone, Debug)]
pub struct SoftOracle {
    alpha: f64,
    q: HashMap<QKey, f64>,
    layers: Vec<Vec<(usize, BankKey)>>,
}

impl SoftOracle {
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn q(&self, key: &QKey) -> Option<f64> {
        self.q.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QKey, &f64)> {
        self.q.iter()
    }

    pub fn layers(&self) -> &[Vec<(usize, BankKey)>] {
        &self.layers
    }

    /// Q values of every candidate of `(s, M)`, copies included.
    pub fn candidate_values(&self, state: usize, bank: &BankKey) -> Result<Vec<f64>> {
        bank.candidates()
            .into_iter()
            .map(|case| {
                self.q(&QKey { state, bank: bank.clone(), case })
                    .ok_or_else(|| Error::MissingData(format!("(s{state}, {bank:?}) is not reachable")))
            })
            .collect()
    }

    /// `V*(s, M) = α lse(Q*/α)`.
    pub fn value(&self, state: usize, bank: &BankKey) -> Result<f64> {
        soft_value(&self.candidate_values(state, bank)?, self.alpha, SoftTarget::Scaled)
    }

    /// Largest absolute difference to a learned table.
    pub fn sup_distance(&self, table: &QTable<QKey>) -> f64 {
        self.q.iter().map(|(k, v)| (table.get(k) - v).abs()).fold(0.0, f64::max)
    }
}

fn backup(
    spec: &FiniteMmdpSpec,
    s: usize,
    bank: &BankKey,
    case: Option<CaseContent>,
    next_value: impl Fn(usize, &BankKey) -> Result<f64>,
) -> Result<f64> {
    let mut q = 0.0;
    for (a, s2, p) in spec.outcomes(s, case) {
        let r = spec.rewards[s][a];
        let next_bank = bank.with(CaseContent::new(s, a, r));
        q += p * (r + spec.gamma * next_value(s2, &next_bank)?);
    }
    Ok(q)
}

/// Solves the soft Bellman equations by backward induction from the horizon.
pub fn enumerate_soft_optimal_q(spec: &FiniteMmdpSpec, alpha: f64) -> Result<SoftOracle> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha {alpha} must be positive")));
    }
    let layers = spec.reachable()?;
    let mut oracle = SoftOracle { alpha, q: HashMap::new(), layers: Vec::new() };
    for t in (0..layers.len()).rev() {
        let last = t + 1 == spec.horizon;
        for (s, bank) in &layers[t] {
            for case in bank.distinct_candidates() {
                let q = backup(spec, *s, bank, case, |s2, b2| if last { Ok(0.0) } else { oracle.value(s2, b2) })?;
                oracle.q.insert(QKey { state: *s, bank: bank.clone(), case }, q);
            }
        }
    }
    oracle.layers = layers;
    Ok(oracle)
}

/// Outcome of [`run_tabular_td`].
#[derive(Clone, Debug)]
pub struct TdRun {
    pub table: QTable<QKey>,
    pub updates: usize,
}

/// Runs sampled tabular soft TD with an exploring schedule.
///
/// Keys are swept deepest layer first so bootstrap targets are already
/// settled. Each key receives `visits_per_key` updates with rate `1/n`, which
/// makes it the running mean of its targets. Outcomes `(a, s')` are drawn by
/// largest deficit `n p − count`, so after `N` visits each outcome has been
/// seen `N p` times whenever that is an integer.
pub fn run_tabular_td(spec: &FiniteMmdpSpec, alpha: f64, visits_per_key: usize) -> Result<TdRun> {
    let layers = spec.reachable()?;
    let mut table = QTable::new();
    let mut updates = 0;
    for t in (0..layers.len()).rev() {
        let last = t + 1 == spec.horizon;
        for (s, bank) in &layers[t] {
            for case in bank.distinct_candidates() {
                let key = QKey { state: *s, bank: bank.clone(), case };
                let outcomes = spec.outcomes(*s, case);
                let mut counts = vec![0usize; outcomes.len()];
                for n in 1..=visits_per_key {
                    let pick = (0..outcomes.len())
                        .max_by(|&i, &j| {
                            let di = n as f64 * outcomes[i].2 - counts[i] as f64;
                            let dj = n as f64 * outcomes[j].2 - counts[j] as f64;
                            di.total_cmp(&dj).then(j.cmp(&i))
                        })
                        .expect("action model rows are distributions");
                    counts[pick] += 1;
                    let (a, s2, _) = outcomes[pick];
                    let r = spec.rewards[*s][a];
                    let next_bank = bank.with(CaseContent::new(*s, a, r));
                    let next: Vec<QKey> = if last {
                        Vec::new()
                    } else {
                        next_bank
                            .candidates()
                            .into_iter()
                            .map(|c| QKey { state: s2, bank: next_bank.clone(), case: c })
                            .collect()
                    };
                    let p = TdParams { eta: 1.0 / n as f64, gamma: spec.gamma, alpha, target: SoftTarget::Scaled };
                    tabular_td_update(&mut table, &key, r, &next, p)?;
                    updates += 1;
                }
            }
        }
    }
    Ok(TdRun { table, updates })
}

/// A spec paired with the temperature it is solved at.
#[derive(Clone, Debug)]
pub struct OracleFixture {
    pub name: &'static str,
    pub spec: FiniteMmdpSpec,
    pub alpha: f64,
}

/// Three small reference problems. All probabilities are multiples of 1/16.
pub fn fixed_specs() -> Vec<OracleFixture> {
    let two_state = FiniteMmdpSpec::imitating(
        vec![vec![vec![0.75, 0.25], vec![0.0, 1.0]], vec![vec![0.5, 0.5], vec![1.0, 0.0]]],
        vec![vec![0.0, 1.0], vec![0.5, -0.5]],
        2,
        0.9,
        0,
        vec![CaseContent::new(1, 0, 0.5)],
        0.75,
    )
    .expect("valid fixture");
    let stochastic = FiniteMmdpSpec::imitating(
        vec![
            vec![vec![0.5, 0.25, 0.25], vec![0.0, 0.75, 0.25]],
            vec![vec![0.25, 0.5, 0.25], vec![0.0, 0.0, 1.0]],
            vec![vec![1.0, 0.0, 0.0], vec![0.25, 0.25, 0.5]],
        ],
        vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![-1.0, 0.5]],
        3,
        0.8,
        0,
        vec![CaseContent::new(0, 1, 0.0), CaseContent::new(2, 0, -1.0)],
        0.75,
    )
    .expect("valid fixture");
    let cold_start = FiniteMmdpSpec::imitating(
        vec![
            vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]],
            vec![vec![0.25, 0.75, 0.0], vec![0.0, 0.5, 0.5]],
        ],
        vec![vec![0.0, 0.25], vec![1.0, 0.0], vec![0.0, 1.0]],
        3,
        0.5,
        0,
        Vec::new(),
        0.75,
    )
    .expect("valid fixture");
    vec![
        OracleFixture { name: "two-state", spec: two_state, alpha: 1.0 },
        OracleFixture { name: "stochastic", spec: stochastic, alpha: 1.0 },
        OracleFixture { name: "cold-start", spec: cold_start, alpha: 0.5 },
    ]
}

impl FiniteEnv for FiniteMmdpSpec {
    fn reward(&self, state: &State, action: &Action) -> Result<f64> {
        let (s, a) = (parse_index(state.text(), 's')?, parse_index(action.text(), 'a')?);
        self.rewards
            .get(s)
            .and_then(|row| row.get(a))
            .copied()
            .ok_or_else(|| Error::invalid(format!("({s}, {a}) outside the reward table")))
    }

    fn transition_prob(&self, state: &State, action: &Action, next: &State) -> f64 {
        let idx = (parse_index(state.text(), 's'), parse_index(action.text(), 'a'), parse_index(next.text(), 's'));
        match idx {
            (Ok(s), Ok(a), Ok(n)) => {
                self.transitions.get(s).and_then(|r| r.get(a)).and_then(|r| r.get(n)).copied().unwrap_or(0.0)
            }
            _ => 0.0,
        }
    }
}

impl ActionModel for FiniteMmdpSpec {
    fn action_prob(&self, state: &State, case: Option<&Case>, action: &Action) -> f64 {
        let content = match case.map(CaseContent::of_case).transpose() {
            Ok(c) => c,
            Err(_) => return 0.0,
        };
        match (parse_index(state.text(), 's'), parse_index(action.text(), 'a')) {
            (Ok(s), Ok(a)) if s < self.n_states && a < self.n_actions => self.action_probs(s, content)[a],
            _ => 0.0,
        }
    }

    fn sample_action(&self, state: &State, case: Option<&Case>, rng: &mut dyn RngCore) -> Action {
        let s = parse_index(state.text(), 's').expect("state of this spec");
        let content = case.map(|c| CaseContent::of_case(c).expect("case of this spec"));
        let a = sample_index(self.action_probs(s, content), rng);
        self.action(a)
    }
}

fn sample_index(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Softmax retrieval over the oracle's `Q*`, i.e. the optimal `μ*`.
pub struct OracleRetrieval<'a> {
    pub oracle: &'a SoftOracle,
}

impl RetrievalPolicy for OracleRetrieval<'_> {
    fn distribution(&self, state: &State, bank: &[Case]) -> Result<RetrievalDistribution> {
        let s = parse_index(state.text(), 's')?;
        let key = BankKey::of_cases(bank)?;
        let values = bank
            .iter()
            .map(|c| {
                let q = self
                    .oracle
                    .q(&QKey { state: s, bank: key.clone(), case: Some(CaseContent::of_case(c)?) })
                    .ok_or_else(|| Error::MissingData(format!("no oracle value for case {}", c.id)))?;
                Ok((c.id, q))
            })
            .collect::<Result<Vec<_>>>()?;
        retrieval_distribution(&values, self.oracle.alpha())
    }
}

/// Every full-length trajectory with its probability, built by multiplying
/// retrieval, action and transition probabilities along each branch.
pub fn enumerate_trajectories(
    spec: &FiniteMmdpSpec,
    retrieval: &dyn RetrievalPolicy,
) -> Result<Vec<(Trajectory, f64)>> {
    spec.validate()?;
    let mut out = Vec::new();
    let mut steps = Vec::new();
    expand(spec, retrieval, spec.initial_state, spec.initial_case_bank(), 1.0, &mut steps, &mut out)?;
    Ok(out)
}

fn expand(
    spec: &FiniteMmdpSpec,
    retrieval: &dyn RetrievalPolicy,
    s: usize,
    bank: CaseBank,
    prob: f64,
    steps: &mut Vec<TrajectoryStep>,
    out: &mut Vec<(Trajectory, f64)>,
) -> Result<()> {
    let state = spec.state(s);
    let choices: Vec<(Option<Case>, f64)> = if bank.is_empty() {
        vec![(None, 1.0)]
    } else {
        let dist = retrieval.distribution(&state, bank.cases())?;
        dist.case_ids()
            .iter()
            .zip(dist.probs())
            .filter(|(_, &p)| p > 0.0)
            .map(|(id, &p)| (bank.get(*id).cloned(), p))
            .collect()
    };
    for (case, pc) in choices {
        let content = case.as_ref().map(CaseContent::of_case).transpose()?;
        for (a, &pa) in spec.action_probs(s, content).iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let r = spec.rewards[s][a];
            let mut next_bank = bank.clone();
            next_bank.write(state.clone(), spec.action(a), r)?;
            steps.push(TrajectoryStep {
                bank_len: bank.len(),
                state: state.clone(),
                case: case.as_ref().map(|c| c.id),
                action: spec.action(a),
                reward: r,
            });
            for (s2, &pn) in spec.transitions[s][a].iter().enumerate() {
                if pn == 0.0 {
                    continue;
                }
                let p = prob * pc * pa * pn;
                if steps.len() == spec.horizon {
                    out.push((
                        Trajectory {
                            horizon: spec.horizon,
                            bank: next_bank.clone(),
                            steps: steps.clone(),
                            final_state: Some(spec.state(s2)),
                        },
                        p,
                    ));
                } else {
                    expand(spec, retrieval, s2, next_bank.clone(), p, steps, out)?;
                }
            }
            steps.pop();
        }
    }
    Ok(())
}

/// Repeated episodes of a finite spec: reset to the initial state, stop after
/// `horizon` steps.
pub struct FiniteEpisodes<'a> {
    spec: &'a FiniteMmdpSpec,
    t: usize,
}

impl<'a> FiniteEpisodes<'a> {
    pub fn new(spec: &'a FiniteMmdpSpec) -> Self {
        FiniteEpisodes { spec, t: 0 }
    }
}

impl EpisodicEnv for FiniteEpisodes<'_> {
    fn reset(&mut self, _rng: &mut dyn RngCore) -> State {
        self.t = 0;
        self.spec.state(self.spec.initial_state)
    }

    fn step(&mut self, state: &State, action: &Action, rng: &mut dyn RngCore) -> Result<EnvStep> {
        let (s, a) = (parse_index(state.text(), 's')?, parse_index(action.text(), 'a')?);
        let reward = FiniteEnv::reward(self.spec, state, action)?;
        let next = sample_index(&self.spec.transitions[s][a], rng);
        self.t += 1;
        Ok(EnvStep { reward, next_state: self.spec.state(next), done: self.t >= self.spec.horizon })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_step(reward_a0: f64) -> FiniteMmdpSpec {
        let spec = FiniteMmdpSpec::imitating(
            vec![vec![vec![1.0], vec![1.0]]],
            vec![vec![reward_a0, 0.0]],
            1,
            0.9,
            0,
            vec![CaseContent::new(0, 0, reward_a0)],
            1.0,
        )
        .unwrap();
        spec.validate().unwrap();
        spec
    }

    #[test]
    fn one_step_deterministic_model_gives_expected_reward() {
        let spec = one_step(0.7);
        let oracle = enumerate_soft_optimal_q(&spec, 1.0).unwrap();
        let key = QKey { state: 0, bank: spec.initial_bank_key(), case: Some(spec.initial_bank[0]) };
        assert!((oracle.q(&key).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(oracle.len(), 1);
    }

    #[test]
    fn duplicate_cases_share_a_value_and_split_retrieval() {
        let mut spec = one_step(1.0);
        spec.initial_bank.push(spec.initial_bank[0]);
        let oracle = enumerate_soft_optimal_q(&spec, 0.3).unwrap();
        let bank = spec.initial_bank_key();
        let qs = oracle.candidate_values(0, &bank).unwrap();
        assert_eq!(qs.len(), 2);
        assert_eq!(qs[0], qs[1]);
        let mu = crate::math::softmax(&qs, 0.3);
        assert_eq!(mu, vec![0.5, 0.5]);
    }

    #[test]
    fn bank_key_keeps_copies_sorted() {
        let a = CaseContent::new(1, 0, 0.0);
        let b = CaseContent::new(0, 1, 1.0);
        let k = BankKey::default().with(a).with(b).with(a);
        assert_eq!(k.contents(), &[b, a, a]);
        assert_eq!(k.candidates().len(), 3);
        assert_eq!(k.distinct_candidates().len(), 2);
        assert_eq!(BankKey::default().candidates(), vec![None]);
        assert_eq!(CaseContent::new(0, 0, -0.0), CaseContent::new(0, 0, 0.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = fixed_specs().remove(0).spec;
        spec.transitions[0][0] = vec![0.5, 0.4];
        assert!(spec.validate().is_err());
        let mut spec = fixed_specs().remove(0).spec;
        spec.horizon = 4;
        assert!(spec.reachable().is_err());
    }

    #[test]
    fn fixtures_are_valid_and_small() {
        for f in fixed_specs() {
            let layers = f.spec.reachable().unwrap();
            assert_eq!(layers.len(), f.spec.horizon, "{}", f.name);
            assert!(layers.iter().map(Vec::len).sum::<usize>() < 200);
        }
    }
}
