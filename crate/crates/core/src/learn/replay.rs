use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;

use super::TransitionRecord;

/// Bounded FIFO of transitions with uniform sampling without replacement.
#[derive(Debug, Clone)]
pub struct ReplayMemory {
    capacity: usize,
    items: VecDeque<TransitionRecord>,
}

impl ReplayMemory {
    pub fn new(capacity: usize) -> Self {
        ReplayMemory { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.max(1)) }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, record: TransitionRecord) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(record);
    }

    pub fn iter(&self) -> impl Iterator<Item = &TransitionRecord> {
        self.items.iter()
    }

    /// `n` distinct records, or `None` while fewer than `n` are stored.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<&TransitionRecord>> {
        if self.items.len() < n {
            return None;
        }
        Some(index::sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect())
    }

    /// Positions sampled, exposed for distribution checks.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Option<Vec<usize>> {
        (self.items.len() >= n).then(|| index::sample(rng, self.items.len(), n).into_vec())
    }
}
