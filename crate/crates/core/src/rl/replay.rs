use ndarray::{Array1, Array2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::env::OBS_DIM;
use crate::geometry::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: [f64; OBS_DIM],
    pub action: f64,
    pub reward: f64,
    pub next_obs: [f64; OBS_DIM],
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.obs.iter().chain(&self.next_obs).all(|v| v.is_finite())
            && self.action.is_finite()
            && self.reward.is_finite()
    }
}

/// A minibatch in row-major matrix form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Batch {
    pub obs: Array2<f64>,
    /// Shape `(n, 1)`.
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 for terminal transitions.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn from_transitions<'a, I>(items: I) -> Self
    where
        I: IntoIterator<Item = &'a Transition>,
    {
        let items: Vec<&Transition> = items.into_iter().collect();
        let n = items.len();
        Self {
            obs: Array2::from_shape_fn((n, OBS_DIM), |(i, j)| items[i].obs[j]),
            actions: Array2::from_shape_fn((n, 1), |(i, _)| items[i].action),
            rewards: Array1::from_shape_fn(n, |i| items[i].reward),
            next_obs: Array2::from_shape_fn((n, OBS_DIM), |(i, j)| items[i].next_obs[j]),
            dones: Array1::from_shape_fn(n, |i| if items[i].done { 1.0 } else { 0.0 }),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    storage: Vec<Transition>,
    /// Slot that the next push overwrites once full.
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            storage: Vec::with_capacity(capacity.min(1 << 20)),
            head: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Contents from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.storage.split_at(self.head);
        older.iter().chain(newer.iter())
    }

    /// Storage indices of a uniform sample without replacement.
    pub fn sample_indices(&self, rng: &mut SimRng, n: usize) -> Vec<usize> {
        let n = n.min(self.storage.len());
        index::sample(rng, self.storage.len(), n).into_vec()
    }

    pub fn sample(&self, rng: &mut SimRng, n: usize) -> Batch {
        let idx = self.sample_indices(rng, n);
        Batch::from_transitions(idx.iter().map(|&i| &self.storage[i]))
    }
}
