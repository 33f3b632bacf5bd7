//! Numerical invariant suites. Each returns a [`CheckReport`] naming the
//! invariant and the worst value observed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::cluster::{ClusterEnv, ClusterTaskSpec};
use super::continual::{
    k_sweep, mean_curve, mean_std, pooled_standard_error, run_continual_learning, run_seeds, ContinualConfig,
    KSweepRow, MemoryMode, RunMetrics, StepQInit,
};
use super::finite::{enumerate_soft_optimal_q, fixed_specs, run_tabular_td};
use crate::error::Result;
use crate::gradcheck::{central_difference, relative_error};
use crate::math::{logsumexp, normalize, softmax};
use crate::mmdp::{AgentConfig, CaseBank, State};
use crate::params::Parameters;
use crate::retrieval::{retrieval_distribution, HashEncoder};
use crate::softq::{
    deep_q_loss, deep_q_td_step, ec_td_gradient, ec_td_loss, policy_value, DeepQTransition, EcContext, EpisodicMemory,
    KernelParams, SoftTarget, SoftTdConfig, Transition,
};
use crate::stepq::{
    ce_gradient, ce_gradient_probability_form, ce_logit_grad, loss_gradient, mean_loss, mse_logit_grad, LabeledTriple,
    Objective, StepQParams,
};

pub const FD_EPS: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-4;
pub const TD_TOL: f64 = 1e-3;
pub const TD_MAX_UPDATES: usize = 100_000;
/// Visits per key in the exploring TD schedule.
pub const TD_VISITS: usize = 32;
pub const CALIBRATION_TOL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckReport {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        CheckReport { name, passed, detail }
    }

    fn failed(name: &'static str, err: crate::Error) -> Self {
        CheckReport::new(name, false, format!("error: {err}"))
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn random_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= total);
    x
}

/// A point near `mu`: a convex step of random length towards a random
/// simplex point.
fn perturb(rng: &mut ChaCha8Rng, mu: &[f64]) -> Vec<f64> {
    let d = random_simplex(rng, mu.len());
    let step: f64 = 10f64.powf(rng.gen_range(-6.0..0.0));
    mu.iter().zip(&d).map(|(m, x)| (1.0 - step) * m + step * x).collect()
}

/// The softmax policy maximises `Σ μ Q − α Σ μ log μ` and attains
/// `α lse(Q / α)`.
pub fn softmax_optimality(vectors: usize, perturbations: usize, seed: u64) -> CheckReport {
    const NAME: &str = "softmax optimality";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_gap, mut worst_value) = (f64::NEG_INFINITY, 0.0f64);
    for _ in 0..vectors {
        let n = rng.gen_range(1..=6);
        let q: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        for alpha in [0.1, 1.0, 10.0] {
            let mu = softmax(&q, alpha);
            let best = policy_value(&q, &mu, alpha);
            let scaled: Vec<f64> = q.iter().map(|v| v / alpha).collect();
            worst_value = worst_value.max((best - alpha * logsumexp(&scaled)).abs());
            for _ in 0..perturbations {
                let other = perturb(&mut rng, &mu);
                worst_gap = worst_gap.max(policy_value(&q, &other, alpha) - best);
            }
        }
    }
    let passed = worst_gap <= 1e-12 && worst_value <= 1e-9;
    CheckReport::new(
        NAME,
        passed,
        format!("max F(mu') - F(mu*) = {worst_gap:.3e}, max |F(mu*) - a lse(Q/a)| = {worst_value:.3e}"),
    )
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    normalize(&mut v);
    v
}

fn randomized<P: Parameters>(p: &P, rng: &mut ChaCha8Rng, scale: f64) -> P {
    let values: Vec<f64> = p.flat().iter().map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    p.with_flat(&values).expect("same shape")
}

/// Analytic vs central-difference gradient of the kernel TD loss.
pub fn ec_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (d, p) = (5, 3);
    let state = |i: usize, rng: &mut ChaCha8Rng| State::with_embedding(format!("s{i}"), unit(rng, d));
    let mut bank = CaseBank::new();
    for i in 0..3 {
        bank.write(state(100 + i, &mut rng)?, crate::mmdp::Action::new(format!("a{i}"))?, rng.gen_range(0.0..1.0))?;
    }
    let mut memory = EpisodicMemory::new();
    for i in 0..9 {
        let s = state(200 + i, &mut rng)?;
        let emb = s.embedding().expect("attached").to_vec();
        let case = if i % 4 == 3 { None } else { Some((i % 3) as u64) };
        memory.push(s, emb, case, rng.gen_range(-1.0..2.0))?;
    }
    let batch: Vec<Transition> = (0..4)
        .map(|i| {
            Ok(Transition {
                state: state(300 + i, &mut rng)?,
                case: Some(rng.gen_range(0..3)),
                reward: rng.gen_range(0.0..1.0),
                next_state: state(400 + i, &mut rng)?,
                bank_len: 0,
                next_bank_len: rng.gen_range(0..=3),
                terminal: i == 3,
            })
        })
        .collect::<Result<_>>()?;
    let encoder = HashEncoder::new(d, 0)?;
    let ctx = EcContext {
        memory: &memory,
        bank: &bank,
        encoder: &encoder,
        gamma: 0.9,
        alpha: 0.7,
        target: SoftTarget::Scaled,
    };
    let theta = randomized(&KernelParams::zeros(p, d), &mut rng, 0.8);
    let theta_bar = randomized(&KernelParams::zeros(p, d), &mut rng, 0.8);
    let analytic = ec_td_gradient(&batch, &theta, &theta_bar, &ctx)?.flat();
    let numeric = central_difference(&theta.flat(), FD_EPS, |x| {
        ec_td_loss(&batch, &theta.with_flat(x).expect("shape"), &theta_bar, &ctx).expect("finite loss")
    });
    Ok(relative_error(&analytic, &numeric))
}

fn labeled_batch(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Result<Vec<LabeledTriple>> {
    (0..n).map(|_| LabeledTriple::new(unit(rng, d), unit(rng, d), f64::from(u8::from(rng.gen_bool(0.5))))).collect()
}

/// Worst of: cross-entropy gradient vs finite differences, and the
/// probability-form gradient vs the logit form.
pub fn ce_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = randomized(&StepQParams::zeros(4, 6), &mut rng, 0.7);
    let batch = labeled_batch(&mut rng, 4, 8)?;
    let analytic = ce_gradient(&batch, &theta)?.flat();
    let numeric = central_difference(&theta.flat(), FD_EPS, |x| {
        mean_loss(&batch, &theta.with_flat(x).expect("shape"), Objective::CrossEntropy).expect("finite loss")
    });
    let prob_form = ce_gradient_probability_form(&batch, &theta)?.flat();
    Ok(relative_error(&analytic, &numeric).max(relative_error(&prob_form, &analytic)))
}

/// Squared-error gradient vs finite differences.
pub fn mse_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta = randomized(&StepQParams::zeros(4, 6), &mut rng, 0.7);
    let batch = labeled_batch(&mut rng, 4, 8)?;
    let analytic = loss_gradient(&batch, &theta, Objective::Mse)?.flat();
    let numeric = central_difference(&theta.flat(), FD_EPS, |x| {
        mean_loss(&batch, &theta.with_flat(x).expect("shape"), Objective::Mse).expect("finite loss")
    });
    Ok(relative_error(&analytic, &numeric))
}

/// Deep soft-Q TD gradient vs finite differences, target network held fixed.
pub fn deep_q_gradient_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4;
    let theta = randomized(&StepQParams::zeros(d, 5), &mut rng, 0.7);
    let theta_bar = randomized(&StepQParams::zeros(d, 5), &mut rng, 0.7);
    let batch: Vec<DeepQTransition> = (0..6)
        .map(|i| DeepQTransition {
            state: unit(&mut rng, d),
            case: unit(&mut rng, d),
            reward: rng.gen_range(-1.0..1.0),
            next_state: unit(&mut rng, d),
            next_cases: (0..i % 4).map(|_| unit(&mut rng, d)).collect(),
        })
        .collect();
    let cfg = SoftTdConfig { gamma: 0.9, alpha: 0.5, target: SoftTarget::Scaled };
    let analytic = deep_q_td_step(&batch, &theta, &theta_bar, cfg)?.1.flat();
    let numeric = central_difference(&theta.flat(), FD_EPS, |x| {
        deep_q_loss(&batch, &theta.with_flat(x).expect("shape"), &theta_bar, cfg).expect("finite loss")
    });
    Ok(relative_error(&analytic, &numeric))
}

/// Every gradient family over `seeds`, each within [`FD_TOL`].
pub fn gradient_fidelity(seeds: &[u64]) -> CheckReport {
    const NAME: &str = "gradient fidelity";
    type Check = fn(u64) -> Result<f64>;
    let families: [(&str, Check); 4] = [
        ("kernel TD", ec_gradient_error),
        ("cross-entropy", ce_gradient_error),
        ("squared error", mse_gradient_error),
        ("deep soft-Q", deep_q_gradient_error),
    ];
    let mut parts = Vec::new();
    let mut passed = !seeds.is_empty();
    for (label, f) in families {
        let mut worst = 0.0f64;
        for &s in seeds {
            match f(s) {
                Ok(e) if e.is_finite() => worst = worst.max(e),
                Ok(_) => worst = f64::INFINITY,
                Err(e) => return CheckReport::failed(NAME, e),
            }
        }
        passed &= worst < FD_TOL;
        parts.push(format!("{label} {worst:.2e}"));
    }
    CheckReport::new(NAME, passed, format!("max relative error over {} seeds: {}", seeds.len(), parts.join(", ")))
}

/// At every reachable `(s, M)` of the fixtures, the softmax over `Q*`
/// attains `V*` and no perturbed retrieval distribution does better.
pub fn oracle_policy_optimality(perturbations: usize, seed: u64) -> CheckReport {
    const NAME: &str = "oracle policy optimality";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_gap, mut worst_value, mut nodes) = (f64::NEG_INFINITY, 0.0f64, 0usize);
    for fx in fixed_specs() {
        let oracle = match enumerate_soft_optimal_q(&fx.spec, fx.alpha) {
            Ok(o) => o,
            Err(e) => return CheckReport::failed(NAME, e),
        };
        for (s, bank) in oracle.layers().iter().flatten() {
            let (q, v) = match (oracle.candidate_values(*s, bank), oracle.value(*s, bank)) {
                (Ok(q), Ok(v)) => (q, v),
                (Err(e), _) | (_, Err(e)) => return CheckReport::failed(NAME, e),
            };
            let mu = match retrieval_distribution(
                &q.iter().enumerate().map(|(i, &x)| (i as u64, x)).collect::<Vec<_>>(),
                fx.alpha,
            ) {
                Ok(d) => d.probs().to_vec(),
                Err(e) => return CheckReport::failed(NAME, e),
            };
            let best = policy_value(&q, &mu, fx.alpha);
            worst_value = worst_value.max((best - v).abs());
            for _ in 0..perturbations {
                worst_gap = worst_gap.max(policy_value(&q, &perturb(&mut rng, &mu), fx.alpha) - best);
            }
            nodes += 1;
        }
    }
    CheckReport::new(
        NAME,
        worst_gap <= 1e-12 && worst_value <= 1e-9,
        format!("{nodes} nodes: max F(mu') - F(mu*) = {worst_gap:.3e}, max |F(mu*) - V*| = {worst_value:.3e}"),
    )
}

/// Tabular soft TD against the exact oracle on the three fixtures.
pub fn oracle_equivalence() -> CheckReport {
    const NAME: &str = "oracle equivalence";
    let mut parts = Vec::new();
    let mut passed = true;
    for fx in fixed_specs() {
        let oracle = match enumerate_soft_optimal_q(&fx.spec, fx.alpha) {
            Ok(o) => o,
            Err(e) => return CheckReport::failed(NAME, e),
        };
        let run = match run_tabular_td(&fx.spec, fx.alpha, TD_VISITS) {
            Ok(r) => r,
            Err(e) => return CheckReport::failed(NAME, e),
        };
        let gap = oracle.sup_distance(&run.table);
        passed &= gap < TD_TOL && run.updates <= TD_MAX_UPDATES && run.table.len() == oracle.len();
        parts.push(format!("{} sup {gap:.1e} in {} updates over {} keys", fx.name, run.updates, oracle.len()));
    }
    CheckReport::new(NAME, passed, parts.join("; "))
}

/// Cross entropy keeps a usable logit gradient where squared error vanishes.
pub fn ce_vs_mse_gradient() -> CheckReport {
    let (q, r) = (0.999, 0.0);
    let ce = ce_logit_grad(q, r).abs();
    let mse = mse_logit_grad(q, r).abs();
    let ratio = ce / mse;
    CheckReport::new(
        "cross-entropy vs squared-error gradient",
        ce >= 100.0 * mse,
        format!("at q = {q}, r = {r}: |CE| = {ce:.6}, |MSE| = {mse:.3e}, ratio {ratio:.1}"),
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationConfig {
    pub hidden: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub epochs: usize,
    pub batch_size: usize,
    /// Starting rate, decayed linearly to zero over the epochs.
    pub learning_rate: f64,
    pub init: StepQInit,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            hidden: 32,
            train_pairs: 60_000,
            test_pairs: 2000,
            epochs: 20,
            batch_size: 64,
            learning_rate: 0.5,
            init: StepQInit::Proximity { sharpness: 1.0 },
        }
    }
}

/// Pairs `(query, case, p*)`, half from the same cluster. Cases are written
/// successes; `p*` is the environment's success probability for the pair.
fn population(env: &ClusterEnv, task_ids: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Vec<(Vec<f64>, Vec<f64>, f64)> {
    let tasks = env.tasks();
    let spec = env.spec();
    (0..n)
        .map(|i| {
            let same = i % 2 == 0;
            let q = &tasks[task_ids[rng.gen_range(0..task_ids.len())]];
            let c = loop {
                let c = &tasks[task_ids[rng.gen_range(0..task_ids.len())]];
                if c.id != q.id && (c.cluster == q.cluster) == same {
                    break c;
                }
            };
            let case_state = env.final_state(c, 1);
            let p = if same { spec.p_match } else { spec.p_mismatch };
            (q.state.embedding().expect("attached").to_vec(), case_state.embedding().expect("attached").to_vec(), p)
        })
        .collect()
}

/// Trains step-Q with cross entropy on Bernoulli labels and returns the
/// held-out mean `|Q − p*|`. Train and test use disjoint tasks.
pub fn calibration_error(seed: u64, cfg: &CalibrationConfig) -> Result<f64> {
    let env = ClusterEnv::new(ClusterTaskSpec { seed, ..Default::default() })?;
    let mut rng = ChaCha8Rng::seed_from_u64(super::mix_seed(seed, 7));
    let n = env.tasks().len();
    let train_ids: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
    let test_ids: Vec<usize> = (0..n).filter(|i| i % 2 == 1).collect();
    let train: Vec<LabeledTriple> = population(&env, &train_ids, cfg.train_pairs, &mut rng)
        .into_iter()
        .map(|(s, c, p)| LabeledTriple::new(s, c, f64::from(u8::from(rng.gen_bool(p)))))
        .collect::<Result<_>>()?;
    let test = population(&env, &test_ids, cfg.test_pairs, &mut rng);

    let mut theta = match cfg.init {
        StepQInit::Random => StepQParams::init(env.spec().query_dim(), cfg.hidden, &mut rng),
        StepQInit::Proximity { sharpness } => {
            StepQParams::proximity_init(env.spec().query_dim(), cfg.hidden, sharpness, &mut rng)?
        }
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * (1.0 - epoch as f64 / cfg.epochs as f64);
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<LabeledTriple> = chunk.iter().map(|&i| train[i].clone()).collect();
            let grad = ce_gradient(&batch, &theta)?;
            theta.add_scaled(&grad, -lr);
        }
    }
    let total: f64 = test.iter().map(|(s, c, p)| theta.forward(s, c).map(|q| (q - p).abs())).sum::<Result<f64>>()?;
    Ok(total / test.len() as f64)
}

pub fn calibration(seed: u64) -> CheckReport {
    const NAME: &str = "step-Q calibration";
    match calibration_error(seed, &CalibrationConfig::default()) {
        Ok(e) => CheckReport::new(NAME, e < CALIBRATION_TOL, format!("held-out mean |Q - p*| = {e:.4}")),
        Err(e) => CheckReport::failed(NAME, e),
    }
}

fn final_accuracies(runs: &[RunMetrics]) -> Vec<f64> {
    runs.iter().map(RunMetrics::final_accuracy).collect()
}

fn non_decreasing(curve: &[f64]) -> bool {
    curve.windows(2).all(|w| w[1] >= w[0])
}

fn fmt_curve(curve: &[f64]) -> String {
    let parts: Vec<String> = curve.iter().map(|a| format!("{a:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Final-iteration ordering parametric ≥ similarity ≥ none, a parametric
/// lead over no memory beyond two standard errors, and non-decreasing mean
/// curves for both memory modes.
pub fn ordering_report(parametric: &[RunMetrics], similarity: &[RunMetrics], none: &[RunMetrics]) -> CheckReport {
    let finals = [final_accuracies(parametric), final_accuracies(similarity), final_accuracies(none)];
    let curves = [mean_curve(parametric), mean_curve(similarity)];
    let means: Vec<f64> = finals.iter().map(|f| mean_std(f).0).collect();
    let se = pooled_standard_error(&finals[0], &finals[2]);
    let gap = means[0] - means[2];
    let passed = means[0] >= means[1]
        && means[1] >= means[2]
        && gap > 2.0 * se
        && non_decreasing(&curves[0])
        && non_decreasing(&curves[1]);
    CheckReport::new(
        "continual ordering",
        passed,
        format!(
            "final parametric {:.4}, similarity {:.4}, none {:.4}; parametric - none = {gap:.4} vs 2 SE = {:.4}; curves parametric {} similarity {}",
            means[0],
            means[1],
            means[2],
            2.0 * se,
            fmt_curve(&curves[0]),
            fmt_curve(&curves[1])
        ),
    )
}

/// Runs all three memory modes over `seeds` and applies [`ordering_report`].
pub fn continual_ordering(
    spec: &ClusterTaskSpec,
    cfg: &ContinualConfig,
    agent: &AgentConfig,
    seeds: &[u64],
) -> CheckReport {
    let mut runs = Vec::new();
    for mode in [MemoryMode::Parametric, MemoryMode::Nonparametric, MemoryMode::None] {
        match run_seeds(spec, &ContinualConfig { memory: mode, ..cfg.clone() }, agent, seeds) {
            Ok(r) => runs.push(r),
            Err(e) => return CheckReport::failed("continual ordering", e),
        }
    }
    ordering_report(&runs[0], &runs[1], &runs[2])
}

/// `K = 4` beats `K = 0` by more than two standard errors, and every row
/// with `K ≥ bank_size` repeats the others exactly.
pub fn k_sweep_report(rows: &[KSweepRow], bank_size: usize) -> CheckReport {
    const NAME: &str = "k sweep";
    let row = |k: usize| rows.iter().find(|r| r.k == k);
    let (Some(k0), Some(k4)) = (row(0), row(4)) else {
        return CheckReport::new(NAME, false, "needs rows for K = 0 and K = 4".into());
    };
    let se = pooled_standard_error(&k4.accuracies, &k0.accuracies);
    let gap = k4.mean - k0.mean;
    let big: Vec<&KSweepRow> = rows.iter().filter(|r| r.k >= bank_size).collect();
    let saturated = big.windows(2).all(|w| w[0].runs == w[1].runs);
    let ks: Vec<String> = big.iter().map(|r| r.k.to_string()).collect();
    CheckReport::new(
        NAME,
        gap > 2.0 * se && saturated,
        format!(
            "K=4 {:.4} vs K=0 {:.4}: gap {gap:.4} vs 2 SE {:.4}; K in [{}] (bank size {bank_size}) identical: {saturated}",
            k4.mean,
            k0.mean,
            2.0 * se,
            ks.join(", ")
        ),
    )
}

/// [`k_sweep_report`] over `K ∈ {0, 4, bank size, 2 × bank size}` with
/// similarity retrieval.
pub fn k_sweep_shape(spec: &ClusterTaskSpec, agent: &AgentConfig, iterations: usize, seeds: &[u64]) -> CheckReport {
    let cfg = ContinualConfig { memory: MemoryMode::Nonparametric, iterations, ..Default::default() };
    let full = spec.n_tasks() * iterations;
    match k_sweep(spec, &cfg, agent, &[0, 4, full, 2 * full], seeds) {
        Ok(rows) => k_sweep_report(&rows, full),
        Err(e) => CheckReport::failed("k sweep", e),
    }
}

/// Two runs with the same configuration agree bit for bit, in every mode.
pub fn determinism(spec: &ClusterTaskSpec, cfg: &ContinualConfig, agent: &AgentConfig) -> CheckReport {
    const NAME: &str = "determinism";
    for mode in MemoryMode::ALL {
        let cfg = ContinualConfig { memory: mode, ..cfg.clone() };
        let runs = (run_continual_learning(spec, &cfg, agent), run_continual_learning(spec, &cfg, agent));
        match runs {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return CheckReport::new(NAME, false, format!("{mode} runs differ")),
            (Err(e), _) | (_, Err(e)) => return CheckReport::failed(NAME, e),
        }
    }
    CheckReport::new(NAME, true, format!("seed {}: repeated runs identical in every mode", agent.seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbations_stay_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mu = [0.2, 0.3, 0.5];
        for _ in 0..100 {
            let p = perturb(&mut rng, &mu);
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_suites_pass() {
        assert!(softmax_optimality(20, 50, 3).passed);
        let r = gradient_fidelity(&[0, 1]);
        assert!(r.passed, "{r}");
        assert!(ce_vs_mse_gradient().passed);
    }

    #[test]
    fn report_formatting() {
        let r = CheckReport::new("x", false, "y".into());
        assert_eq!(r.to_string(), "FAIL x: y");
    }

    #[test]
    fn experiment_suites_on_a_small_task_set() {
        let spec = ClusterTaskSpec { n_clusters: 2, tasks_per_cluster: 6, ..Default::default() };
        let cfg = ContinualConfig { iterations: 2, hidden: 4, ..Default::default() };
        let r = determinism(&spec, &cfg, &AgentConfig::default());
        assert!(r.passed, "{r}");
        let r = k_sweep_shape(&spec, &AgentConfig::default(), 2, &[0, 1]);
        assert!(r.detail.contains("identical: true"), "{r}");
    }
}
