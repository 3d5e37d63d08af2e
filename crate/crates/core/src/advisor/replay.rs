use std::collections::VecDeque;

use rand::Rng;

use crate::grid::CellIndex;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<T> {
    pub maps: Vec<T>,
    pub agent: CellIndex,
    pub action: usize,
    /// Discounted reward collected until the next decision.
    pub reward: T,
    /// Discount applied to the bootstrapped value, `gamma^k` for a
    /// transition spanning `k` environment steps.
    pub discount: T,
    pub next_maps: Vec<T>,
    pub next_agent: CellIndex,
    pub terminal: bool,
}

/// Fixed-capacity experience replay; the oldest entry goes first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<T> {
    capacity: usize,
    items: VecDeque<Transition<T>>,
}

impl<T> ReplayBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
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

    pub fn push(&mut self, t: Transition<T>) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> &Transition<T> {
        &self.items[i]
    }

    /// Uniform sample with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition<T>> {
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
