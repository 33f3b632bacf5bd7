//! Verification environments and experiment drivers: exact oracles over
//! tiny memory-based MDPs, a clustered-task bandit, and the continual
//! learning loop built on it.

pub mod checks;
pub mod cluster;
pub mod continual;
pub mod finite;

pub use cluster::{cluster_env_step, ClusterEnv, ClusterTask, ClusterTaskSpec, StepOutcome};
pub use continual::{
    k_sweep, mean_curve, mean_std, pooled_standard_error, run_continual_learning, run_continual_with_bank, run_seeds,
    run_seeds_with_banks, ContinualConfig, IterationMetrics, KSweepRow, MemoryMode, RunMetrics, StepQInit,
};
pub use finite::{
    enumerate_soft_optimal_q, enumerate_trajectories, fixed_specs, run_tabular_td, BankKey, CaseContent,
    FiniteEpisodes, FiniteMmdpSpec, OracleFixture, OracleRetrieval, QKey, SoftOracle, TdRun,
};

/// Derives an independent stream seed from a base seed and a label.
pub fn mix_seed(base: u64, label: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(base ^ splitmix(label))
}
