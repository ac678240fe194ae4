use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on rows summing to one.
pub const POLICY_SUM_TOL: f64 = 1e-9;

/// Non-stationary stochastic policy `pi_h(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    /// `probs` is row-major `(h, s, a)`.
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Result<Self> {
        if probs.len() != horizon * num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "policy has {} entries, expected {}",
                probs.len(),
                horizon * num_states * num_actions
            )));
        }
        for (row, chunk) in probs.chunks(num_actions).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if chunk.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > POLICY_SUM_TOL {
                return Err(Error::InvalidPolicy(format!(
                    "row (h={}, s={}) is not a distribution (sum {sum})",
                    row / num_states,
                    row % num_states
                )));
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn uniform(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; horizon * num_states * num_actions],
        }
    }

    /// Deterministic policy from an action table indexed `(h, s)`.
    pub fn deterministic(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        actions: &[usize],
    ) -> Result<Self> {
        if actions.len() != horizon * num_states {
            return Err(Error::ShapeMismatch("action table size".into()));
        }
        let mut probs = vec![0.0; horizon * num_states * num_actions];
        for (row, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::IndexOutOfRange {
                    what: "action",
                    index: a,
                    limit: num_actions,
                });
            }
            probs[row * num_actions + a] = 1.0;
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            probs,
        })
    }

    pub(crate) fn from_raw(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        probs: Vec<f64>,
    ) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            probs,
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn prob(&self, h: usize, state: usize, action: usize) -> f64 {
        self.probs[(h * self.num_states + state) * self.num_actions + action]
    }

    #[inline]
    pub fn row(&self, h: usize, state: usize) -> &[f64] {
        let off = (h * self.num_states + state) * self.num_actions;
        &self.probs[off..off + self.num_actions]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }
}
