//! Multi-step soft Q-learning over case retrieval.

mod agent;
mod deep;
mod kernel;
mod replay;
mod tabular;
mod value;

pub use agent::{algorithm1_step, EcAgent, EcAgentConfig, EpisodicTarget, StepLog};
pub use deep::{deep_q_loss, deep_q_target, deep_q_td_step, deep_q_value, DeepQTransition, SoftTdConfig};
pub use kernel::{
    ec_td_gradient, ec_td_loss, kernel, q_ec_estimate, q_ec_or_default, EcContext, EpisodicEntry, EpisodicMemory,
    KernelParams, DEFAULT_PROJECTION_DIM,
};
pub use replay::{ReplayBuffer, Transition};
pub use tabular::{tabular_td_update, QTable, TdParams};
pub use value::{policy_value, soft_value, SoftTarget};

pub use crate::params::target_update;
