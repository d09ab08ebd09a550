use std::collections::VecDeque;

use rand::Rng;

/// One stored step. Queue counts are kept raw and normalized on use; actor
/// outputs are the (possibly exploratory) probabilities that were executed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<u16>,
    pub actions: Vec<f32>,
    /// Scheduling-agent observations, concatenated in agent order.
    pub local_obs: Vec<f32>,
    pub reward: f32,
    pub next_state: Vec<u16>,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: VecDeque<Transition>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity.min(1 << 16)), capacity }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
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

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}
