use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use crate::mmdp::{CaseBank, CaseId, State};

/// `(s, c, r, s', M, M')`. Both banks are prefixes of the agent's bank and are
/// stored by length.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: State,
    pub case: Option<CaseId>,
    pub reward: f64,
    pub next_state: State,
    pub bank_len: usize,
    pub next_bank_len: usize,
    /// No bootstrap from `next_state`.
    pub terminal: bool,
}

impl Transition {
    /// Candidate cases at the next state: every case of `M'`, or the null
    /// case when `M'` is empty.
    pub fn next_candidates(&self, bank: &CaseBank) -> crate::Result<Vec<Option<CaseId>>> {
        let snap = bank.snapshot(self.next_bank_len)?;
        if snap.is_empty() {
            Ok(vec![None])
        } else {
            Ok(snap.iter().map(|c| Some(c.id)).collect())
        }
    }
}

/// Bounded FIFO replay buffer.
#[derive(Clone, Debug)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    /// Appends, evicting the oldest item when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// Up to `n` distinct items drawn uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&T> {
        let n = n.min(self.items.len());
        index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fifo_eviction_respects_capacity() {
        let mut b = ReplayBuffer::new(3);
        for i in 0..5 {
            b.push(i);
        }
        assert_eq!(b.len(), 3);
        assert_eq!(b.iter().copied().collect::<Vec<_>>(), vec![2, 3, 4]);
    }

    #[test]
    fn minibatch_has_no_repeats() {
        let mut b = ReplayBuffer::new(100);
        for i in 0..10 {
            b.push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut got: Vec<i32> = b.sample(10, &mut rng).into_iter().copied().collect();
        got.sort();
        assert_eq!(got, (0..10).collect::<Vec<_>>());
        assert_eq!(b.sample(50, &mut rng).len(), 10);
    }
}
