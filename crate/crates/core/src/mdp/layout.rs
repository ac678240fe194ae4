use std::ops::Range;

use crate::error::{Error, Result};

/// Upper bound on stored occupancy coordinates.
pub const MAX_SUPPORT: usize = 50_000_000;

/// Index of the structurally nonzero coordinates `(h, s, a, s')` of an
/// occupancy measure.
///
/// Stage 0 only contains the initial state; later stages contain every
/// state reachable from it, and each `(h, s, a)` block lists the successors
/// the features allow. Entries are sorted by `(h, s, a, s')`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportLayout {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    initial_state: usize,
    block_offsets: Vec<usize>,
    next_state: Vec<u32>,
    stage_offsets: Vec<usize>,
    reachable: Vec<bool>,
    inflow: Vec<Vec<usize>>,
}

impl SupportLayout {
    pub fn new(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        initial_state: usize,
        successors: impl Fn(usize, usize) -> Vec<usize>,
    ) -> Result<Self> {
        if horizon == 0 || num_states == 0 || num_actions == 0 {
            return Err(Error::InvalidModel("empty layout".into()));
        }
        if initial_state >= num_states {
            return Err(Error::IndexOutOfRange {
                what: "initial_state",
                index: initial_state,
                limit: num_states,
            });
        }
        if num_states > u32::MAX as usize {
            return Err(Error::InstanceTooLarge("too many states".into()));
        }
        let (s_n, a_n) = (num_states, num_actions);
        let succ: Vec<Vec<usize>> = (0..s_n * a_n)
            .map(|i| {
                let mut v = successors(i / a_n, i % a_n);
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let mut reachable = vec![false; horizon * s_n];
        reachable[initial_state] = true;
        for h in 1..horizon {
            for s in 0..s_n {
                if reachable[(h - 1) * s_n + s] {
                    for a in 0..a_n {
                        for &sp in &succ[s * a_n + a] {
                            reachable[h * s_n + sp] = true;
                        }
                    }
                }
            }
        }
        let mut block_offsets = Vec::with_capacity(horizon * s_n * a_n + 1);
        let mut next_state = Vec::new();
        let mut stage_offsets = Vec::with_capacity(horizon + 1);
        block_offsets.push(0);
        for h in 0..horizon {
            stage_offsets.push(next_state.len());
            for s in 0..s_n {
                for a in 0..a_n {
                    if reachable[h * s_n + s] {
                        for &sp in &succ[s * a_n + a] {
                            if sp >= s_n {
                                return Err(Error::IndexOutOfRange {
                                    what: "successor",
                                    index: sp,
                                    limit: s_n,
                                });
                            }
                            next_state.push(sp as u32);
                        }
                    }
                    if next_state.len() > MAX_SUPPORT {
                        return Err(Error::InstanceTooLarge(format!(
                            "occupancy support exceeds {MAX_SUPPORT} entries"
                        )));
                    }
                    block_offsets.push(next_state.len());
                }
            }
        }
        stage_offsets.push(next_state.len());
        let mut inflow = vec![Vec::new(); horizon * s_n];
        for h in 1..horizon {
            for j in stage_offsets[h - 1]..stage_offsets[h] {
                inflow[h * s_n + next_state[j] as usize].push(j);
            }
        }
        Ok(Self {
            horizon,
            num_states,
            num_actions,
            initial_state,
            block_offsets,
            next_state,
            stage_offsets,
            reachable,
            inflow,
        })
    }

    /// Layout with every transition allowed.
    pub fn full(
        horizon: usize,
        num_states: usize,
        num_actions: usize,
        initial_state: usize,
    ) -> Result<Self> {
        Self::new(horizon, num_states, num_actions, initial_state, |_, _| {
            (0..num_states).collect()
        })
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
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Number of stored coordinates.
    pub fn len(&self) -> usize {
        self.next_state.len()
    }

    pub fn is_empty(&self) -> bool {
        self.next_state.is_empty()
    }

    #[inline]
    pub fn block_index(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    /// Entry range of the `(h, s, a)` block.
    #[inline]
    pub fn block(&self, h: usize, s: usize, a: usize) -> Range<usize> {
        let b = self.block_index(h, s, a);
        self.block_offsets[b]..self.block_offsets[b + 1]
    }

    /// Entry range of all actions at `(h, s)`.
    #[inline]
    pub fn state_block(&self, h: usize, s: usize) -> Range<usize> {
        let b = self.block_index(h, s, 0);
        self.block_offsets[b]..self.block_offsets[b + self.num_actions]
    }

    #[inline]
    pub fn stage(&self, h: usize) -> Range<usize> {
        self.stage_offsets[h]..self.stage_offsets[h + 1]
    }

    /// Successor state of entry `j`.
    #[inline]
    pub fn next_state(&self, j: usize) -> usize {
        self.next_state[j] as usize
    }

    /// Whether `s` can be occupied at stage `h`.
    #[inline]
    pub fn is_reachable(&self, h: usize, s: usize) -> bool {
        self.reachable[h * self.num_states + s]
    }

    /// Entries of stage `h - 1` that lead into `s` (empty for `h = 0`).
    #[inline]
    pub fn inflow(&self, h: usize, s: usize) -> &[usize] {
        &self.inflow[h * self.num_states + s]
    }

    /// Entry index of `(h, s, a, s')`, if it is in the support.
    pub fn find(&self, h: usize, s: usize, a: usize, next: usize) -> Option<usize> {
        if h >= self.horizon || s >= self.num_states || a >= self.num_actions {
            return None;
        }
        let r = self.block(h, s, a);
        let slice = &self.next_state[r.clone()];
        slice
            .binary_search(&(next as u32))
            .ok()
            .map(|i| r.start + i)
    }

    /// Decodes entry `j` into `(h, s, a, s')`.
    pub fn decode(&self, j: usize) -> (usize, usize, usize, usize) {
        let b = self.block_offsets.partition_point(|&o| o <= j) - 1;
        let a = b % self.num_actions;
        let hs = b / self.num_actions;
        (hs / self.num_states, hs % self.num_states, a, self.next_state(j))
    }

    /// Index into a dense `(h, s, a, s')` array.
    #[inline]
    pub fn dense_index(&self, h: usize, s: usize, a: usize, next: usize) -> usize {
        ((h * self.num_states + s) * self.num_actions + a) * self.num_states + next
    }

    pub fn dense_len(&self) -> usize {
        self.horizon * self.num_states * self.num_actions * self.num_states
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_layout_counts() {
        let l = SupportLayout::full(3, 2, 2, 1).unwrap();
        // stage 0: only the initial state, 2 actions x 2 successors
        assert_eq!(l.stage(0).len(), 4);
        assert_eq!(l.stage(1).len(), 8);
        assert_eq!(l.len(), 20);
        assert!(l.block(0, 0, 0).is_empty());
        assert_eq!(l.inflow(1, 0).len(), 2);
        for j in 0..l.len() {
            let (h, s, a, sp) = l.decode(j);
            assert_eq!(l.find(h, s, a, sp), Some(j));
        }
    }
}
