//! Named parameter tensors, used for target averaging, checkpoints and
//! finite-difference checks.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::structural(format!(
                "tensor {name}: shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { name, shape, data })
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        Tensor { name: name.into(), shape: Vec::new(), data: vec![v] }
    }
}

/// A parameter set that can be flattened to tensors and rebuilt from them.
pub trait Parameters: Sized {
    fn to_tensors(&self) -> Vec<Tensor>;

    fn from_tensors(tensors: &[Tensor]) -> Result<Self>;

    fn flat(&self) -> Vec<f64> {
        self.to_tensors().into_iter().flat_map(|t| t.data).collect()
    }

    /// Same shapes as `self`, values taken from `values`.
    fn with_flat(&self, values: &[f64]) -> Result<Self> {
        let mut tensors = self.to_tensors();
        let total: usize = tensors.iter().map(|t| t.data.len()).sum();
        if total != values.len() {
            return Err(Error::structural(format!("{} values for {total} parameters", values.len())));
        }
        let mut offset = 0;
        for t in &mut tensors {
            let n = t.data.len();
            t.data.copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Self::from_tensors(&tensors)
    }

    fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.to_tensors().into_iter().map(|t| (t.name, t.shape)).collect()
    }
}

/// `θ̄ ← β θ̄ + (1 − β) θ`, elementwise.
pub fn target_update<P: Parameters>(theta_bar: &P, theta: &P, beta: f64) -> Result<P> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::domain(format!("beta must be in [0, 1], got {beta}")));
    }
    if theta_bar.shapes() != theta.shapes() {
        return Err(Error::structural("target and online parameters have different shapes"));
    }
    let bar = theta_bar.flat();
    let mixed: Vec<f64> =
        bar.iter().zip(theta.flat()).map(|(b, t)| if beta == 1.0 { *b } else { beta * b + (1.0 - beta) * t }).collect();
    theta_bar.with_flat(&mixed)
}

pub(crate) fn take<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    tensors.iter().find(|t| t.name == name).ok_or_else(|| Error::structural(format!("missing tensor {name}")))
}
