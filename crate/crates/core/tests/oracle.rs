use casemem_core::harness::checks::{oracle_equivalence, TD_TOL};
use casemem_core::harness::{
    enumerate_soft_optimal_q, enumerate_trajectories, fixed_specs, run_tabular_td, CaseContent, FiniteEpisodes,
    FiniteMmdpSpec, OracleRetrieval, QKey,
};
use casemem_core::math::softmax;
use casemem_core::retrieval::HashEncoder;
use casemem_core::softq::{policy_value, EcAgent, EcAgentConfig};
use casemem_core::{trajectory_logprob, AgentConfig, Case, RetrievalPolicy};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn trajectory_probabilities_sum_to_one_and_match_the_log_density() {
    for fx in fixed_specs() {
        let oracle = enumerate_soft_optimal_q(&fx.spec, fx.alpha).unwrap();
        let policy = OracleRetrieval { oracle: &oracle };
        let trajs = enumerate_trajectories(&fx.spec, &policy).unwrap();
        let total: f64 = trajs.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12, "{}: {total}", fx.name);
        for (traj, p) in &trajs {
            let lp = trajectory_logprob(traj, &policy, &fx.spec, &fx.spec).unwrap();
            assert!((lp - p.ln()).abs() < 1e-10, "{}: {lp} vs {}", fx.name, p.ln());
        }
    }
}

#[test]
fn tampered_rewards_and_banks_have_zero_probability() {
    let fx = &fixed_specs()[1];
    let oracle = enumerate_soft_optimal_q(&fx.spec, fx.alpha).unwrap();
    let policy = OracleRetrieval { oracle: &oracle };
    let (traj, _) = enumerate_trajectories(&fx.spec, &policy).unwrap().swap_remove(0);

    let mut wrong_reward = traj.clone();
    wrong_reward.steps[0].reward += 1.0;
    assert_eq!(trajectory_logprob(&wrong_reward, &policy, &fx.spec, &fx.spec).unwrap(), f64::NEG_INFINITY);

    let mut skipped = traj.clone();
    skipped.steps[1].bank_len += 1;
    assert!(trajectory_logprob(&skipped, &policy, &fx.spec, &fx.spec).map_or(true, |lp| lp == f64::NEG_INFINITY));
}

#[test]
fn softmax_over_oracle_values_is_optimal_at_every_reachable_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for fx in fixed_specs() {
        let oracle = enumerate_soft_optimal_q(&fx.spec, fx.alpha).unwrap();
        for layer in oracle.layers() {
            for (s, bank) in layer {
                let q = oracle.candidate_values(*s, bank).unwrap();
                let mu = softmax(&q, fx.alpha);
                let best = policy_value(&q, &mu, fx.alpha);
                assert!((best - oracle.value(*s, bank).unwrap()).abs() < 1e-12);
                for _ in 0..200 {
                    let t: f64 = rng.gen();
                    let raw: Vec<f64> = q.iter().map(|_| rng.gen::<f64>()).collect();
                    let sum: f64 = raw.iter().sum();
                    let other: Vec<f64> = mu.iter().zip(&raw).map(|(m, x)| (1.0 - t) * m + t * x / sum).collect();
                    assert!(policy_value(&q, &other, fx.alpha) <= best + 1e-12);
                }
            }
        }
    }
}

/// The optimal soft value is the expected discounted return plus the
/// discounted retrieval entropy under the softmax policy.
#[test]
fn soft_value_equals_expected_regularised_return() {
    for fx in fixed_specs() {
        let oracle = enumerate_soft_optimal_q(&fx.spec, fx.alpha).unwrap();
        let policy = OracleRetrieval { oracle: &oracle };
        let mut expected = 0.0;
        for (traj, p) in enumerate_trajectories(&fx.spec, &policy).unwrap() {
            let mut ret = 0.0;
            for (t, step) in traj.steps.iter().enumerate() {
                let snapshot = traj.bank.snapshot(step.bank_len).unwrap();
                let h = if snapshot.is_empty() {
                    0.0
                } else {
                    policy.distribution(&step.state, snapshot).unwrap().entropy()
                };
                ret += fx.spec.gamma.powi(t as i32) * (step.reward + fx.alpha * h);
            }
            expected += p * ret;
        }
        let v0 = oracle.value(fx.spec.initial_state, &fx.spec.initial_bank_key()).unwrap();
        assert!((v0 - expected).abs() < 1e-10, "{}: {v0} vs {expected}", fx.name);
    }
}

#[test]
fn fixture_suite_passes() {
    let report = oracle_equivalence();
    assert!(report.passed, "{report}");
}

fn dyadic_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut row = vec![0.0; n];
    for _ in 0..8 {
        row[rng.gen_range(0..n)] += 0.125;
    }
    row
}

fn random_spec(seed: u64) -> FiniteMmdpSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_states = rng.gen_range(1..=3);
    let transitions = (0..n_states).map(|_| (0..2).map(|_| dyadic_row(&mut rng, n_states)).collect()).collect();
    let levels = [-1.0, -0.5, 0.0, 0.25, 1.0];
    let rewards: Vec<Vec<f64>> =
        (0..n_states).map(|_| (0..2).map(|_| levels[rng.gen_range(0..levels.len())]).collect()).collect();
    let seeded = (0..rng.gen_range(0..=2))
        .map(|_| {
            let (s, a) = (rng.gen_range(0..n_states), rng.gen_range(0..2));
            CaseContent::new(s, a, rewards[s][a])
        })
        .collect();
    let gamma = [0.0, 0.5, 0.9][rng.gen_range(0..3)];
    FiniteMmdpSpec::imitating(
        transitions,
        rewards,
        rng.gen_range(1..=3),
        gamma,
        rng.gen_range(0..n_states),
        seeded,
        0.75,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tabular_td_matches_the_oracle_on_random_specs(seed in any::<u64>(), alpha in prop::sample::select(vec![0.25, 1.0, 4.0])) {
        let spec = random_spec(seed);
        let oracle = enumerate_soft_optimal_q(&spec, alpha).unwrap();
        let run = run_tabular_td(&spec, alpha, 32).unwrap();
        prop_assert_eq!(run.table.len(), oracle.len());
        prop_assert!(oracle.sup_distance(&run.table) < TD_TOL);
        prop_assert!(oracle.sup_distance(&run.table) < 1e-9);
    }

    #[test]
    fn identical_cases_get_equal_values(seed in any::<u64>()) {
        let mut spec = random_spec(seed);
        let c = CaseContent::new(0, 1, spec.rewards[0][1]);
        spec.initial_bank = vec![c, c];
        let oracle = enumerate_soft_optimal_q(&spec, 1.0).unwrap();
        let qs = oracle.candidate_values(spec.initial_state, &spec.initial_bank_key()).unwrap();
        prop_assert_eq!(qs.len(), 2);
        prop_assert_eq!(qs[0], qs[1]);
        let key = QKey { state: spec.initial_state, bank: spec.initial_bank_key(), case: Some(c) };
        prop_assert_eq!(oracle.q(&key), Some(qs[0]));
    }
}

#[test]
fn episodic_agent_runs_on_a_finite_spec() {
    let fx = &fixed_specs()[1];
    let cfg = EcAgentConfig {
        agent: AgentConfig { alpha: 0.5, gamma: fx.spec.gamma, eta: 0.05, seed: 9, ..Default::default() },
        batch_size: 8,
        projection_dim: 8,
        ..Default::default()
    };
    let mut agent = EcAgent::new(cfg, HashEncoder::new(32, 1).unwrap()).unwrap();
    let mut env = FiniteEpisodes::new(&fx.spec);
    let mut dones = 0;
    for t in 1..=120u64 {
        let before = agent.bank.len();
        let log = agent.step(&mut env, &fx.spec, t).unwrap();
        assert_eq!(agent.bank.len(), before + 1);
        assert!(log.loss.is_finite() && log.td_target.is_finite());
        if let Some(d) = &log.distribution {
            assert_eq!(d.len(), before);
            assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(log.target_updated, t % 10 == 0);
        dones += usize::from(log.transition.terminal);
    }
    assert_eq!(dones, 120 / fx.spec.horizon);
    assert_eq!(agent.memory.len(), 120);
    let written: Vec<&Case> = agent.bank.iter().collect();
    assert!(written.windows(2).all(|w| w[1].id == w[0].id + 1));
}
