use rand::Rng;

use crate::env::RemanentFlux;

/// Stored one-step experience. `next_state` is kept for completeness; episodes are terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayItem {
    pub state: RemanentFlux,
    pub action: usize,
    pub reward: f64,
    pub next_state: RemanentFlux,
    pub done: bool,
}

/// Fixed-capacity ring buffer; the oldest item is evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<ReplayItem>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be >= 1");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        }
    }

    pub fn push(&mut self, item: ReplayItem) {
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            self.items[self.next] = item;
        }
        self.next = (self.next + 1) % self.capacity;
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

    /// Items from oldest to newest.
    pub fn ordered(&self) -> Vec<ReplayItem> {
        if self.items.len() < self.capacity {
            return self.items.clone();
        }
        let mut v = self.items[self.next..].to_vec();
        v.extend_from_slice(&self.items[..self.next]);
        v
    }

    pub fn get(&self, i: usize) -> Option<&ReplayItem> {
        self.items.get(i)
    }

    pub fn items_mut(&mut self) -> &mut [ReplayItem] {
        &mut self.items
    }

    /// `n` items drawn uniformly with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<ReplayItem> {
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }
}
