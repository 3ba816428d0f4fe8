use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::policy::{apply_floor, POLICY_FLOOR};
use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Tabular soft Q-learning hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoftQConfig {
    pub learning_rate: f64,
    /// MDP discount.
    pub discount: f64,
    /// Entropy temperature of the Boltzmann policy and soft value.
    pub temperature: f64,
    pub replay_capacity: usize,
    /// Transitions replayed per environment step.
    pub batch: usize,
}

impl Default for SoftQConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            discount: 0.99,
            temperature: 0.5,
            replay_capacity: 10_000,
            batch: 128,
        }
    }
}

impl SoftQConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(invalid("learning_rate", format!("must lie in (0, 1], got {}", self.learning_rate)));
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(invalid("discount", format!("must lie in (0, 1), got {}", self.discount)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(invalid("temperature", format!("must be > 0, got {}", self.temperature)));
        }
        if self.replay_capacity == 0 || self.batch == 0 {
            return Err(invalid("replay", "capacity and batch must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next: usize,
    /// Lava or goal. Timeouts are not terminal and still bootstrap.
    pub terminal: bool,
}

/// FIFO replay memory.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: VecDeque::with_capacity(capacity) }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    /// Uniform draws with replacement.
    pub fn sample(&self, n: usize, rng: &mut Rng) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Tabular soft Q-function with a Boltzmann policy.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftQAgent {
    config: SoftQConfig,
    n_actions: usize,
    q: Vec<f64>,
}

impl SoftQAgent {
    pub fn new(n_states: usize, n_actions: usize, config: SoftQConfig) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 {
            return Err(invalid("n_actions", "must be positive"));
        }
        Ok(Self { config, n_actions, q: vec![0.0; n_states * n_actions] })
    }

    pub fn config(&self) -> &SoftQConfig {
        &self.config
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn q_row(&self, state: usize) -> &[f64] {
        &self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub(crate) fn q_row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.q[state * self.n_actions..(state + 1) * self.n_actions]
    }

    pub fn q(&self, state: usize, action: usize) -> f64 {
        self.q[state * self.n_actions + action]
    }

    /// `tau * log mean_a exp(Q(s, a) / tau)`. Averaging instead of summing
    /// measures entropy against the uniform policy, so a zero Q-row has value
    /// zero and staying alive earns no bonus.
    pub fn soft_value(&self, state: usize) -> f64 {
        let tau = self.config.temperature;
        let row = self.q_row(state);
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = row.iter().map(|q| ((q - m) / tau).exp()).sum::<f64>() / row.len() as f64;
        m + tau * mean.ln()
    }

    /// Boltzmann policy `pi(a|s) ~ exp(Q(s, a) / tau)` with the probability
    /// floor applied.
    pub fn policy_row(&self, state: usize) -> Vec<f64> {
        let mut row = boltzmann(self.q_row(state), self.config.temperature);
        apply_floor(&mut row, POLICY_FLOOR);
        row
    }

    /// One soft Bellman step per transition, in order.
    pub fn update(&mut self, batch: &[Transition]) {
        let (lr, gamma) = (self.config.learning_rate, self.config.discount);
        for t in batch {
            let target = if t.terminal {
                t.reward
            } else {
                t.reward + gamma * self.soft_value(t.next)
            };
            let i = t.state * self.n_actions + t.action;
            self.q[i] += lr * (target - self.q[i]);
        }
    }
}

/// Softmax of `values / temperature`.
pub fn boltzmann(values: &[f64], temperature: f64) -> Vec<f64> {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| ((v - m) / temperature).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}
