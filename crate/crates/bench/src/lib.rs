//! Shared inputs for the benchmarks.

use casemem_core::math::normalize;
use casemem_core::{Action, CaseBank, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if normalize(&mut v) == 0.0 {
        v[0] = 1.0;
    }
    v
}

/// `n` cases with attached `d`-dimensional embeddings and binary rewards.
pub fn embedded_bank(n: usize, d: usize, seed: u64) -> CaseBank {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bank = CaseBank::new();
    for i in 0..n {
        let state = State::with_embedding(format!("case {i}"), unit_vector(&mut rng, d)).expect("unit vector");
        bank.write(state, Action::new(format!("act {i}")).expect("non-empty"), f64::from(rng.gen_range(0..2u8)))
            .expect("finite reward");
    }
    bank
}
