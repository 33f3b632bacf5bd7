//! Plain-text checkpoint: a config echo followed by every parameter tensor
//! with its shape header. Values use the shortest round-trip decimal form, so
//! write → read is exact.
//!
//! ```text
//! casemem-checkpoint 1
//! config alpha 0.5
//! tensor kernel.w 2 32 256
//! 0.1 -0.25 ...
//! end
//! ```

use crate::error::{Error, Result};
use crate::params::Tensor;

const MAGIC: &str = "casemem-checkpoint 1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    /// Ordered `(key, value)` pairs; values must not contain newlines.
    pub config: Vec<(String, String)>,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(MAGIC);
        out.push('\n');
        for (k, v) in &self.config {
            out.push_str(&format!("config {k} {v}\n"));
        }
        for t in &self.tensors {
            out.push_str(&format!("tensor {} {}", t.name, t.shape.len()));
            for d in &t.shape {
                out.push_str(&format!(" {d}"));
            }
            out.push('\n');
            let vals: Vec<String> = t.data.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let err = |line: usize, message: String| Error::Parse { line, message };
        match lines.next() {
            Some((_, l)) if l == MAGIC => {}
            _ => return Err(err(1, format!("expected header {MAGIC:?}"))),
        }
        let mut ck = Checkpoint::default();
        while let Some((n, line)) = lines.next() {
            if line == "end" {
                return Ok(ck);
            }
            if let Some(rest) = line.strip_prefix("config ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                ck.config.push((k.to_string(), v.to_string()));
            } else if let Some(rest) = line.strip_prefix("tensor ") {
                let mut parts = rest.split(' ');
                let name =
                    parts.next().filter(|s| !s.is_empty()).ok_or_else(|| err(n, "tensor without name".into()))?;
                let nums: Vec<usize> = parts
                    .map(|p| p.parse().map_err(|_| err(n, format!("bad shape field {p:?}"))))
                    .collect::<Result<_>>()?;
                let (rank, shape) = nums.split_first().ok_or_else(|| err(n, "tensor without rank".into()))?;
                if *rank != shape.len() {
                    return Err(err(n, format!("rank {rank} but {} dims", shape.len())));
                }
                let (vn, vline) = lines.next().ok_or_else(|| err(n + 1, "missing tensor values".into()))?;
                let data: Vec<f64> = if vline.is_empty() {
                    Vec::new()
                } else {
                    vline
                        .split(' ')
                        .map(|v| v.parse().map_err(|_| err(vn, format!("bad value {v:?}"))))
                        .collect::<Result<_>>()?
                };
                ck.tensors.push(Tensor::new(name, shape.to_vec(), data).map_err(|e| err(vn, e.to_string()))?);
            } else {
                return Err(err(n, format!("unrecognised line {line:?}")));
            }
        }
        Err(err(text.lines().count() + 1, "missing end marker".into()))
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}
