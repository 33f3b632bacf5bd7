//! Case banks as line-delimited JSON, one case per line:
//!
//! ```text
//! {"id":0,"state":"task 3 || outcome: solved","action":"solve task 3","reward":1.0,"embedding":[0.1, ...]}
//! ```
//!
//! `embedding` is present only for states that carry one.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use casemem_core::{Action, Case, CaseBank, State};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum BankFileError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Integrity { line: usize, message: String },
}

/// The on-disk form of a case.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseBankRecord {
    pub id: u64,
    pub state: String,
    pub action: String,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl From<&Case> for CaseBankRecord {
    fn from(c: &Case) -> Self {
        CaseBankRecord {
            id: c.id,
            state: c.state.text().to_string(),
            action: c.action.text().to_string(),
            reward: c.reward,
            embedding: c.state.embedding().map(<[f64]>::to_vec),
        }
    }
}

impl CaseBankRecord {
    fn into_case(self) -> casemem_core::Result<Case> {
        let state = match self.embedding {
            Some(e) => State::with_embedding(self.state, e)?,
            None => State::new(self.state)?,
        };
        Ok(Case { id: self.id, state, action: Action::new(self.action)?, reward: self.reward })
    }
}

pub fn write_bank<W: Write>(bank: &CaseBank, mut out: W) -> io::Result<()> {
    for c in bank.iter() {
        serde_json::to_writer(&mut out, &CaseBankRecord::from(c))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads records until end of input. Blank lines are skipped; ids must be
/// unique and ascending.
pub fn read_bank<R: BufRead>(input: R) -> Result<CaseBank, BankFileError> {
    let mut cases: Vec<Case> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse = |message: String| BankFileError::Parse { line: line_no, message };
        let record: CaseBankRecord = serde_json::from_str(&line).map_err(|e| parse(e.to_string()))?;
        if let Some(prev) = cases.last() {
            if record.id == prev.id {
                return Err(BankFileError::Integrity { line: line_no, message: format!("duplicate id {}", record.id) });
            }
            if record.id < prev.id {
                return Err(BankFileError::Integrity {
                    line: line_no,
                    message: format!("id {} after {}", record.id, prev.id),
                });
            }
        }
        cases.push(record.into_case().map_err(|e| parse(e.to_string()))?);
    }
    CaseBank::from_cases(cases).map_err(|e| BankFileError::Integrity { line: 0, message: e.to_string() })
}

pub fn save_bank(bank: &CaseBank, path: &Path) -> io::Result<()> {
    write_bank(bank, BufWriter::new(fs::File::create(path)?))
}

pub fn load_bank(path: &Path) -> Result<CaseBank, BankFileError> {
    read_bank(BufReader::new(fs::File::open(path)?))
}
