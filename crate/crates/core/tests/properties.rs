use casemem_core::checkpoint::Checkpoint;
use casemem_core::math::{entropy, logsumexp, softmax};
use casemem_core::params::{target_update, Parameters};
use casemem_core::retrieval::{read_nonparametric, similarities, HashEncoder};
use casemem_core::softq::{policy_value, soft_value, KernelParams, SoftTarget};
use casemem_core::stepq::StepQParams;
use casemem_core::{retrieval_distribution, write_case, Action, CaseBank, State};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn q_vector() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-20.0..20.0f64, 1..=6)
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e ]{1,12}", 1..12)
        .prop_map(|v| v.into_iter().map(|s| if s.trim().is_empty() { "x".to_string() } else { s }).collect())
}

fn bank_from(texts: &[String], rewards: &[f64]) -> CaseBank {
    let mut bank = CaseBank::new();
    for (t, r) in texts.iter().zip(rewards.iter().cycle()) {
        bank.write(State::new(t.clone()).unwrap(), Action::new(format!("do {t}")).unwrap(), *r).unwrap();
    }
    bank
}

proptest! {
    #[test]
    fn retrieval_ignores_a_common_shift(q in q_vector(), shift in -100.0..100.0f64, alpha in 0.05..20.0f64) {
        let a: Vec<(u64, f64)> = q.iter().enumerate().map(|(i, &v)| (i as u64, v)).collect();
        let b: Vec<(u64, f64)> = q.iter().enumerate().map(|(i, &v)| (i as u64, v + shift)).collect();
        let pa = retrieval_distribution(&a, alpha).unwrap();
        let pb = retrieval_distribution(&b, alpha).unwrap();
        for (x, y) in pa.probs().iter().zip(pb.probs()) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert!((pa.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn higher_temperature_never_lowers_entropy(q in q_vector(), a in 0.05..10.0f64, factor in 1.0..10.0f64) {
        let cold = entropy(&softmax(&q, a));
        let hot = entropy(&softmax(&q, a * factor));
        prop_assert!(hot >= cold - 1e-12);
        prop_assert!(hot <= (q.len() as f64).ln() + 1e-12);
    }

    #[test]
    fn softmax_attains_the_soft_value(q in q_vector(), alpha in prop::sample::select(vec![0.1, 1.0, 10.0]), mix in prop::collection::vec(0.0..1.0f64, 6), t in 0.0..1.0f64) {
        let mu = softmax(&q, alpha);
        let best = policy_value(&q, &mu, alpha);
        let v = soft_value(&q, alpha, SoftTarget::Scaled).unwrap();
        prop_assert!((best - v).abs() < 1e-9);
        let total: f64 = mix[..q.len()].iter().sum::<f64>() + 1e-12;
        let other: Vec<f64> = mu.iter().zip(&mix).map(|(m, x)| (1.0 - t) * m + t * x / total).collect();
        prop_assert!(policy_value(&q, &other, alpha) <= best + 1e-9);
    }

    #[test]
    fn soft_value_bounds(q in q_vector(), alpha in 0.05..10.0f64) {
        let max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = soft_value(&q, alpha, SoftTarget::Scaled).unwrap();
        prop_assert!(v >= max - 1e-12);
        prop_assert!(v <= max + alpha * (q.len() as f64).ln() + 1e-9);
        let u = soft_value(&q, alpha, SoftTarget::Unscaled).unwrap();
        prop_assert!((u - alpha * logsumexp(&q)).abs() < 1e-12);
    }

    #[test]
    fn top_k_is_a_prefix_and_dominates(texts in words(), query in "[a-e ]{1,12}", k in 0usize..14) {
        let bank = bank_from(&texts, &[0.0, 1.0]);
        let enc = HashEncoder::new(64, 3).unwrap();
        let q = State::new(if query.trim().is_empty() { "q".to_string() } else { query }).unwrap();
        let got = read_nonparametric(&q, bank.cases(), k, &enc).unwrap();
        let more = read_nonparametric(&q, bank.cases(), k + 1, &enc).unwrap();
        prop_assert_eq!(got.len(), k.min(bank.len()));
        prop_assert_eq!(&more[..got.len()], &got[..]);
        let sims = similarities(&q, bank.cases(), &enc).unwrap();
        let worst_in = got.iter().map(|c| sims[c.id as usize]).fold(f64::INFINITY, f64::min);
        for (i, s) in sims.iter().enumerate() {
            if !got.iter().any(|c| c.id as usize == i) {
                prop_assert!(*s <= worst_in);
            }
        }
    }

    #[test]
    fn writes_only_append(texts in words(), rewards in prop::collection::vec(-5.0..5.0f64, 1..4)) {
        let mut bank = CaseBank::new();
        for (t, r) in texts.iter().zip(rewards.iter().cycle()) {
            let before = bank.clone();
            let next = write_case(&bank, State::new(t.clone()).unwrap(), Action::new("a").unwrap(), *r).unwrap();
            prop_assert_eq!(next.len(), before.len() + 1);
            prop_assert_eq!(&next.cases()[..before.len()], before.cases());
            prop_assert_eq!(next.cases().last().unwrap().id, before.len() as u64);
            prop_assert!(write_case(&next, State::new("s").unwrap(), Action::new("a").unwrap(), f64::NAN).is_err());
            bank = next;
        }
        for (i, c) in bank.cases().iter().enumerate() {
            prop_assert_eq!(bank.snapshot(i).unwrap().len(), i);
            prop_assert_eq!(bank.get(c.id), Some(c));
        }
    }

    #[test]
    fn target_update_is_a_convex_mix(seed in any::<u64>(), beta in 0.0..=1.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = StepQParams::init(3, 4, &mut rng);
        let b = StepQParams::init(3, 4, &mut rng);
        let mixed = target_update(&a, &b, beta).unwrap();
        for ((m, x), y) in mixed.flat().iter().zip(a.flat()).zip(b.flat()) {
            prop_assert!((m - (beta * x + (1.0 - beta) * y)).abs() < 1e-15);
            prop_assert!(*m >= x.min(y) - 1e-15 && *m <= x.max(y) + 1e-15);
        }
        prop_assert_eq!(target_update(&a, &b, 1.0).unwrap(), a.clone());
        prop_assert_eq!(target_update(&a, &b, 0.0).unwrap(), b);
        prop_assert!(target_update(&a, &a, 1.5).is_err());
    }

    #[test]
    fn checkpoints_round_trip_exactly(seed in any::<u64>(), d in 1usize..5, h in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = StepQParams::init(d, h, &mut rng);
        let kernel = KernelParams::random(3, d, -0.3, &mut rng);
        let mut tensors = theta.to_tensors();
        tensors.extend(kernel.to_tensors());
        let ck = Checkpoint { config: vec![("seed".into(), seed.to_string())], tensors };
        let back = Checkpoint::parse(&ck.to_text()).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(StepQParams::from_tensors(&back.tensors).unwrap(), theta);
        prop_assert_eq!(KernelParams::from_tensors(&back.tensors).unwrap(), kernel);
    }
}
