use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the `[0, 1/H]` range of reward entries.
pub const REWARD_TOL: f64 = 1e-12;

/// Per-episode reward `r(s, a)` in `[0, 1/H]`, shared by all stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardFunction {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl RewardFunction {
    /// `values` is row-major `(s, a)`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        values: Vec<f64>,
        horizon: usize,
    ) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch(format!(
                "reward has {} entries, expected {}",
                values.len(),
                num_states * num_actions
            )));
        }
        let cap = 1.0 / horizon as f64;
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(v >= -REWARD_TOL && v <= cap + REWARD_TOL))
        {
            return Err(Error::InvalidReward(format!(
                "entry {i} = {v} outside [0, 1/H = {cap}]"
            )));
        }
        Ok(Self {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Entrywise sum, used for cumulative rewards (no range check).
    pub fn accumulate(&mut self, other: &RewardFunction) {
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x += y;
        }
    }
}
