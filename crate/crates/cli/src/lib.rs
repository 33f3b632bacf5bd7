//! Command-line front end for the casemem library: configuration files,
//! case-bank persistence, metric files and the `run` / `check` / `sweep`
//! verbs.

pub mod app;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod persist;

pub use app::run_cli;
pub use config::{ConfigError, ExperimentConfig, Mode, Seeds};
pub use persist::{load_bank, save_bank, BankFileError, CaseBankRecord};
