use std::collections::HashMap;
use std::hash::Hash;

use crate::error::Result;
use crate::softq::{soft_value, SoftTarget};

/// Exact-match Q table; absent keys read as 0.
#[derive(Clone, Debug)]
pub struct QTable<K> {
    values: HashMap<K, f64>,
}

impl<K> Default for QTable<K> {
    fn default() -> Self {
        QTable { values: HashMap::new() }
    }
}

impl<K: Hash + Eq> QTable<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &K) -> f64 {
        self.values.get(key).copied().unwrap_or(0.0)
    }

    pub fn set(&mut self, key: K, value: f64) {
        self.values.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &f64)> {
        self.values.iter()
    }
}

/// Hyper-parameters of one soft TD backup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdParams {
    pub eta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub target: SoftTarget,
}

/// `Q(s,M,c) ← Q + η [r + γ V(s', M') − Q]` with `V` the soft value over
/// `next`. An empty `next` marks a terminal transition (`V = 0`). Only the
/// entry for `key` changes; the new value is returned.
pub fn tabular_td_update<K: Hash + Eq + Clone>(
    table: &mut QTable<K>,
    key: &K,
    reward: f64,
    next: &[K],
    p: TdParams,
) -> Result<f64> {
    let bootstrap = if next.is_empty() {
        0.0
    } else {
        let qs: Vec<f64> = next.iter().map(|k| table.get(k)).collect();
        soft_value(&qs, p.alpha, p.target)?
    };
    let old = table.get(key);
    let new = old + p.eta * (reward + p.gamma * bootstrap - old);
    if p.eta != 0.0 {
        table.set(key.clone(), new);
    }
    Ok(new)
}
