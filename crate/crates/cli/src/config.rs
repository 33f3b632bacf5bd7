//! Experiment configuration: a TOML file with one section per module, plus
//! `--section.key value` overrides from the command line.
//!
//! ```toml
//! mode = "continual"
//! seeds = 20            # or an explicit list, e.g. [3, 5, 8]
//!
//! [agent]
//! k_retrieve = 4
//!
//! [env]
//! p_match = 0.85
//!
//! [continual]
//! memory = ["none", "nonparametric", "parametric"]
//! iterations = 5
//!
//! [stepq]
//! learning_rate = 0.1
//!
//! [sweep]
//! k_values = [0, 1, 2, 4, 8]
//!
//! [output]
//! dir = "runs/baseline"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use casemem_core::harness::{ClusterTaskSpec, ContinualConfig, MemoryMode, StepQInit};
use casemem_core::stepq::TrainConfig;
use casemem_core::AgentConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

/// Environment variable naming the output directory when the config does not.
pub const OUT_DIR_ENV: &str = "CASEMEM_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "casemem-out";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("bad override {flag}: {message}")]
    Override { flag: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    OracleCheck,
    GradCheck,
    TabularTd,
    Continual,
    KSweep,
}

impl Mode {
    pub const ALL: [Mode; 5] = [Mode::OracleCheck, Mode::GradCheck, Mode::TabularTd, Mode::Continual, Mode::KSweep];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::OracleCheck => "oracle-check",
            Mode::GradCheck => "grad-check",
            Mode::TabularTd => "tabular-td",
            Mode::Continual => "continual",
            Mode::KSweep => "k-sweep",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

/// `seeds = N` means `0..N`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Seeds {
    pub fn resolve(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinualSection {
    pub memory: OneOrMany<MemoryMode>,
    pub iterations: usize,
    pub hidden: usize,
    pub candidate_pool: usize,
    pub init: StepQInit,
}

impl Default for ContinualSection {
    fn default() -> Self {
        let base = ContinualConfig::default();
        ContinualSection {
            memory: OneOrMany::Many(MemoryMode::ALL.to_vec()),
            iterations: base.iterations,
            hidden: base.hidden,
            candidate_pool: base.candidate_pool,
            init: base.init,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub memory: MemoryMode,
    pub k_values: Vec<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection { memory: MemoryMode::Nonparametric, k_values: vec![0, 1, 2, 4, 8, 16] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    /// Also write each run's final case bank.
    pub save_banks: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seeds: Seeds,
    pub agent: AgentConfig,
    /// `env.seed` is replaced by each run seed.
    pub env: ClusterTaskSpec,
    pub continual: ContinualSection,
    pub stepq: TrainConfig,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Continual,
            seeds: Seeds::Count(20),
            agent: AgentConfig::default(),
            env: ClusterTaskSpec::default(),
            continual: ContinualSection::default(),
            stepq: ContinualConfig::default().train,
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        Self::from_table(table)
    }

    fn from_table(table: Table) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (or starts from defaults) and applies `overrides`, a flat
    /// list of `--key value` or `--key=value` items.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = match path {
            Some(p) => {
                let text =
                    std::fs::read_to_string(p).map_err(|source| ConfigError::Read { path: p.to_path_buf(), source })?;
                text.parse::<Table>().map_err(|e| ConfigError::Syntax(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for (key, value) in parse_overrides(overrides)? {
            set_path(&mut table, &key, value)?;
        }
        Self::from_table(table)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: casemem_core::Error| ConfigError::Invalid(e.to_string());
        self.agent.validate().map_err(invalid)?;
        self.env.validate().map_err(invalid)?;
        let seeds = self.seeds.resolve();
        if seeds.is_empty() {
            return Err(ConfigError::Invalid("seed list is empty".into()));
        }
        if seeds.iter().any(|&s| s > i64::MAX as u64) {
            return Err(ConfigError::Invalid("seeds must fit in a signed 64-bit integer".into()));
        }
        if self.continual.memory.to_vec().is_empty() {
            return Err(ConfigError::Invalid("continual.memory lists no mode".into()));
        }
        if self.sweep.k_values.is_empty() {
            return Err(ConfigError::Invalid("sweep.k_values is empty".into()));
        }
        if self.stepq.batch_size == 0 || self.stepq.learning_rate.is_nan() || self.stepq.learning_rate <= 0.0 {
            return Err(ConfigError::Invalid("stepq needs a positive batch size and learning rate".into()));
        }
        for m in self.continual.memory.to_vec() {
            self.continual_config(m).validate().map_err(invalid)?;
        }
        Ok(())
    }

    pub fn continual_config(&self, memory: MemoryMode) -> ContinualConfig {
        ContinualConfig {
            memory,
            iterations: self.continual.iterations,
            hidden: self.continual.hidden,
            init: self.continual.init,
            candidate_pool: self.continual.candidate_pool,
            train: self.stepq.clone(),
        }
    }

    /// The configured directory, else `$CASEMEM_OUT_DIR`, else `casemem-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    /// TOML that loads back to this configuration.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }
}

/// Short flags and the keys they stand for.
const SHORTHANDS: [(&str, &str); 4] = [
    ("out", "output.dir"),
    ("k", "agent.k_retrieve"),
    ("alpha", "agent.alpha"),
    ("iterations", "continual.iterations"),
];

fn parse_overrides(items: &[String]) -> Result<Vec<(String, Value)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = items.iter();
    while let Some(item) = it.next() {
        let bad = |message: &str| ConfigError::Override { flag: item.clone(), message: message.into() };
        let body = item.strip_prefix("--").ok_or_else(|| bad("expected --key value"))?;
        let (key, raw) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => (body.to_string(), it.next().ok_or_else(|| bad("missing value"))?.clone()),
        };
        if key.is_empty() {
            return Err(bad("empty key"));
        }
        let key = SHORTHANDS.iter().find(|(s, _)| *s == key).map_or(key, |(_, full)| full.to_string());
        out.push((key, parse_value(&raw)));
    }
    Ok(out)
}

/// A TOML literal when `raw` is one, a comma-separated list, or else a
/// plain string.
pub fn parse_value(raw: &str) -> Value {
    if let Ok(mut t) = format!("v = {raw}").parse::<Table>() {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    if raw.contains(',') && !raw.starts_with('[') {
        return Value::Array(raw.split(',').map(|p| parse_value(p.trim())).collect());
    }
    Value::String(raw.to_string())
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override {
            flag: format!("--{key}"),
            message: format!("{p} is not a section"),
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
