//! Per-iteration metric records, one JSON object per line, fields in a fixed
//! order.

use std::io::{self, BufRead, Write};

use casemem_core::harness::RunMetrics;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricRecord {
    pub iteration: usize,
    pub seed: u64,
    pub mode: String,
    pub accuracy: f64,
    pub mean_reward: f64,
    pub mean_retrieval_entropy: f64,
    pub loss: Option<f64>,
}

pub fn records(run: &RunMetrics) -> Vec<MetricRecord> {
    run.iterations
        .iter()
        .map(|m| MetricRecord {
            iteration: m.iteration,
            seed: run.seed,
            mode: run.mode.to_string(),
            accuracy: m.accuracy,
            mean_reward: m.mean_reward,
            mean_retrieval_entropy: m.mean_retrieval_entropy,
            loss: m.loss,
        })
        .collect()
}

pub fn write_records<'a, W: Write>(out: &mut W, records: impl IntoIterator<Item = &'a MetricRecord>) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Parses a metrics file; errors name the 1-based line.
pub fn read_records<R: BufRead>(input: R) -> Result<Vec<MetricRecord>, String> {
    input
        .lines()
        .enumerate()
        .map(|(i, line)| {
            let line = line.map_err(|e| format!("line {}: {e}", i + 1))?;
            serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", i + 1))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_order_is_fixed() {
        let r = MetricRecord {
            iteration: 2,
            seed: 7,
            mode: "parametric".into(),
            accuracy: 0.5,
            mean_reward: 0.5,
            mean_retrieval_entropy: 1.25,
            loss: None,
        };
        let mut out = Vec::new();
        write_records(&mut out, [&r]).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "{\"iteration\":2,\"seed\":7,\"mode\":\"parametric\",\"accuracy\":0.5,\"mean_reward\":0.5,\"mean_retrieval_entropy\":1.25,\"loss\":null}\n"
        );
        assert_eq!(read_records(text.as_bytes()).unwrap(), vec![r]);
        assert!(read_records("{}\n".as_bytes()).unwrap_err().starts_with("line 1"));
    }
}
