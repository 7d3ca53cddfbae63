use rand::Rng;
use serde::{Deserialize, Serialize};

/// One transition as seen by a single agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub observation: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminal: bool,
    pub next_mask: Vec<bool>,
}

/// Fixed-capacity ring; once full, each insert evicts the oldest entry.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Experience>,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, storage: Vec::with_capacity(capacity.min(1 << 16)), inserted: 0 }
    }

    pub fn push(&mut self, exp: Experience) {
        if self.storage.len() < self.capacity {
            self.storage.push(exp);
        } else {
            let slot = (self.inserted % self.capacity as u64) as usize;
            self.storage[slot] = exp;
        }
        self.inserted += 1;
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Uniform sampling with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, batch: usize, rng: &mut R) -> Vec<&'a Experience> {
        if self.storage.is_empty() {
            return Vec::new();
        }
        (0..batch).map(|_| &self.storage[rng.gen_range(0..self.storage.len())]).collect()
    }

    /// Contents from oldest to newest.
    pub fn iter_chronological(&self) -> impl Iterator<Item = &Experience> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            (self.inserted % self.capacity as u64) as usize
        };
        self.storage[split..].iter().chain(self.storage[..split].iter())
    }
}
