//! Case-based reasoning agents as memory-based MDPs.
//!
//! A case bank of `(state, action, reward)` triples is read by a retrieval
//! policy and grown by appending. Retrieval is either plain cosine top-K, a
//! softmax over soft Q values estimated by kernel-weighted episodic memory,
//! or top-K over a small learned network `Q(s, c) ≈ p(success | s, c)`.
//! The [`harness`] module holds exact oracles and scripted environments used
//! to verify all of the above.

pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod harness;
pub mod math;
pub mod mmdp;
pub mod params;
pub mod retrieval;
pub mod softq;
pub mod stepq;

pub use error::{Error, Result};
pub use mmdp::{
    entropy_regularized_return, trajectory_logprob, write_case, Action, ActionModel, AgentConfig, Case, CaseBank,
    CaseId, EnvStep, EpisodicEnv, FiniteEnv, RetrievalPolicy, SharedCaseBank, State, Trajectory, TrajectoryStep,
};
pub use params::{target_update, Parameters, Tensor};
pub use retrieval::{
    cosine_similarity, read_nonparametric, read_parametric, retrieval_distribution, sample_case, Encoder, HashEncoder,
    RetrievalDistribution,
};
