use std::sync::Arc;

use super::layout::SupportLayout;
use super::model::LinearMixtureModel;
use super::policy::StochasticPolicy;
use super::reward::RewardFunction;
use crate::error::{Error, Result};

/// Occupancy measure `z_h(s, a, s')` stored over a [`SupportLayout`].
///
/// Coordinates outside the layout are structurally zero; [`Self::get`] and
/// [`Self::to_dense`] expose the full `(h, s, a, s')` view.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMeasure {
    layout: Arc<SupportLayout>,
    values: Vec<f64>,
}

/// Constraint residuals of an occupancy measure (max absolute violation).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OccupancyResiduals {
    pub normalization: f64,
    pub flow: f64,
    pub initial: f64,
    pub negativity: f64,
}

impl OccupancyResiduals {
    pub fn max(&self) -> f64 {
        self.normalization
            .max(self.flow)
            .max(self.initial)
            .max(self.negativity)
    }
}

impl OccupancyMeasure {
    pub fn new(layout: Arc<SupportLayout>, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::ShapeMismatch(format!(
                "occupancy has {} entries, layout has {}",
                values.len(),
                layout.len()
            )));
        }
        Ok(Self { layout, values })
    }

    pub fn zeros(layout: Arc<SupportLayout>) -> Self {
        let n = layout.len();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    /// Uniform mass over the stored coordinates of each stage.
    pub fn uniform(layout: Arc<SupportLayout>) -> Self {
        let mut values = vec![0.0; layout.len()];
        for h in 0..layout.horizon() {
            let r = layout.stage(h);
            let w = 1.0 / r.len() as f64;
            values[r].iter_mut().for_each(|x| *x = w);
        }
        Self { layout, values }
    }

    /// From a dense `(h, s, a, s')` array; mass outside the layout is an error.
    pub fn from_dense(layout: Arc<SupportLayout>, dense: &[f64]) -> Result<Self> {
        if dense.len() != layout.dense_len() {
            return Err(Error::ShapeMismatch(format!(
                "dense occupancy has {} entries, expected {}",
                dense.len(),
                layout.dense_len()
            )));
        }
        let (h_n, s_n, a_n) = (layout.horizon(), layout.num_states(), layout.num_actions());
        let mut values = vec![0.0; layout.len()];
        for h in 0..h_n {
            for s in 0..s_n {
                for a in 0..a_n {
                    for sp in 0..s_n {
                        let x = dense[layout.dense_index(h, s, a, sp)];
                        match layout.find(h, s, a, sp) {
                            Some(j) => values[j] = x,
                            None if x != 0.0 => {
                                return Err(Error::ShapeMismatch(format!(
                                    "mass {x} outside the support at (h={h}, s={s}, a={a}, s'={sp})"
                                )))
                            }
                            None => {}
                        }
                    }
                }
            }
        }
        Ok(Self { layout, values })
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let l = &self.layout;
        let mut out = vec![0.0; l.dense_len()];
        for h in 0..l.horizon() {
            for s in 0..l.num_states() {
                for a in 0..l.num_actions() {
                    for j in l.block(h, s, a) {
                        out[l.dense_index(h, s, a, l.next_state(j))] = self.values[j];
                    }
                }
            }
        }
        out
    }

    pub fn layout(&self) -> &Arc<SupportLayout> {
        &self.layout
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, h: usize, s: usize, a: usize, next: usize) -> f64 {
        self.layout
            .find(h, s, a, next)
            .map_or(0.0, |j| self.values[j])
    }

    /// `q_h(s, a) = sum_s' z_h(s, a, s')`.
    pub fn state_action_mass(&self, h: usize, s: usize, a: usize) -> f64 {
        self.values[self.layout.block(h, s, a)].iter().sum()
    }

    /// `sum_{a, s'} z_h(s, a, s')`.
    pub fn state_mass(&self, h: usize, s: usize) -> f64 {
        self.values[self.layout.state_block(h, s)].iter().sum()
    }

    pub fn stage_sum(&self, h: usize) -> f64 {
        self.values[self.layout.stage(h)].iter().sum()
    }

    /// `<z, r> = sum_h sum_{s,a,s'} z_h(s,a,s') r(s,a)`.
    pub fn value(&self, reward: &RewardFunction) -> f64 {
        let l = &self.layout;
        let mut total = 0.0;
        for h in 0..l.horizon() {
            for s in 0..l.num_states() {
                if !l.is_reachable(h, s) {
                    continue;
                }
                for a in 0..l.num_actions() {
                    let r = reward.get(s, a);
                    if r != 0.0 {
                        total += r * self.state_action_mass(h, s, a);
                    }
                }
            }
        }
        total
    }

    /// Rescales each stage to unit mass (stages with zero mass are left alone).
    pub fn normalize_stages(&mut self) {
        for h in 0..self.layout.horizon() {
            let r = self.layout.stage(h);
            let t: f64 = self.values[r.clone()].iter().sum();
            if t > 0.0 {
                self.values[r].iter_mut().for_each(|x| *x /= t);
            }
        }
    }

    pub fn residuals(&self) -> OccupancyResiduals {
        let l = &self.layout;
        let mut res = OccupancyResiduals {
            negativity: self
                .values
                .iter()
                .fold(0.0f64, |m, &x| m.max((-x).max(0.0))),
            ..Default::default()
        };
        for h in 0..l.horizon() {
            res.normalization = res.normalization.max((self.stage_sum(h) - 1.0).abs());
        }
        res.initial = (self.state_mass(0, l.initial_state()) - 1.0).abs();
        for h in 1..l.horizon() {
            for s in 0..l.num_states() {
                if !l.is_reachable(h, s) {
                    continue;
                }
                let inflow: f64 = l.inflow(h, s).iter().map(|&j| self.values[j]).sum();
                res.flow = res.flow.max((self.state_mass(h, s) - inflow).abs());
            }
        }
        res
    }

    /// `sum x log(x/y) - x + y` with `0 log 0 = 0`.
    pub fn bregman_divergence(&self, other: &OccupancyMeasure) -> Result<f64> {
        if self.values.len() != other.values.len() {
            return Err(Error::ShapeMismatch("occupancy layouts differ".into()));
        }
        crate::projection::potential::kl_divergence(&self.values, &other.values)
    }
}

/// Policy and per-stage kernel recovered from an occupancy measure.
#[derive(Debug, Clone)]
pub struct InducedModel {
    pub policy: StochasticPolicy,
    /// `P_h(s'|s,a)` over the layout of the source measure.
    pub transition: Vec<f64>,
    /// `(h, s)` rows with zero mass, given the uniform action distribution.
    pub flagged_states: Vec<(usize, usize)>,
    /// `(h, s, a)` pairs with zero mass, given a uniform successor distribution.
    pub flagged_pairs: Vec<(usize, usize, usize)>,
}

const ZERO_MASS: f64 = f64::MIN_POSITIVE;

/// `pi_h(a|s) ∝ sum_s' z_h(s,a,s')`, zero-mass rows uniform and flagged.
pub fn occupancy_to_policy(z: &OccupancyMeasure) -> (StochasticPolicy, Vec<(usize, usize)>) {
    let l = z.layout();
    let (h_n, s_n, a_n) = (l.horizon(), l.num_states(), l.num_actions());
    let mut probs = vec![0.0; h_n * s_n * a_n];
    let mut flagged = Vec::new();
    let mut masses = vec![0.0; a_n];
    for h in 0..h_n {
        for s in 0..s_n {
            let mut total = 0.0;
            for (a, m) in masses.iter_mut().enumerate() {
                *m = z.state_action_mass(h, s, a).max(0.0);
                total += *m;
            }
            let row = &mut probs[(h * s_n + s) * a_n..(h * s_n + s + 1) * a_n];
            if total > ZERO_MASS && total.is_finite() {
                for (p, m) in row.iter_mut().zip(&masses) {
                    *p = m / total;
                }
            } else {
                row.iter_mut().for_each(|p| *p = 1.0 / a_n as f64);
                flagged.push((h, s));
            }
        }
    }
    (StochasticPolicy::from_raw(h_n, s_n, a_n, probs), flagged)
}

/// Policy plus `P_h(s'|s,a) = z_h(s,a,s') / sum_y z_h(s,a,y)`.
pub fn occupancy_to_policy_and_transition(z: &OccupancyMeasure) -> InducedModel {
    let (policy, flagged_states) = occupancy_to_policy(z);
    let l = z.layout();
    let mut transition = vec![0.0; l.len()];
    let mut flagged_pairs = Vec::new();
    for h in 0..l.horizon() {
        for s in 0..l.num_states() {
            for a in 0..l.num_actions() {
                let r = l.block(h, s, a);
                if r.is_empty() {
                    continue;
                }
                let total: f64 = z.values()[r.clone()].iter().map(|x| x.max(0.0)).sum();
                if total > ZERO_MASS && total.is_finite() {
                    for j in r {
                        transition[j] = z.values()[j].max(0.0) / total;
                    }
                } else {
                    let w = 1.0 / r.len() as f64;
                    transition[r].iter_mut().for_each(|x| *x = w);
                    flagged_pairs.push((h, s, a));
                }
            }
        }
    }
    InducedModel {
        policy,
        transition,
        flagged_states,
        flagged_pairs,
    }
}

/// Forward recursion for the occupancy of `policy` under a stage-dependent
/// kernel given per layout entry.
pub fn occupancy_with_kernel(
    layout: &Arc<SupportLayout>,
    policy: &StochasticPolicy,
    kernel: impl Fn(usize, usize, usize, usize) -> f64,
) -> Result<OccupancyMeasure> {
    let l = layout;
    check_policy_shape(l, policy)?;
    let (h_n, s_n, a_n) = (l.horizon(), l.num_states(), l.num_actions());
    let mut values = vec![0.0; l.len()];
    let mut mass = vec![0.0; s_n];
    mass[l.initial_state()] = 1.0;
    let mut next_mass = vec![0.0; s_n];
    for h in 0..h_n {
        next_mass.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..s_n {
            let m = mass[s];
            if m == 0.0 {
                continue;
            }
            if !l.is_reachable(h, s) {
                return Err(Error::ShapeMismatch(format!(
                    "mass at unreachable state (h={h}, s={s})"
                )));
            }
            for a in 0..a_n {
                let pa = m * policy.prob(h, s, a);
                if pa == 0.0 {
                    continue;
                }
                for j in l.block(h, s, a) {
                    let sp = l.next_state(j);
                    let x = pa * kernel(h, s, a, sp);
                    values[j] = x;
                    next_mass[sp] += x;
                }
            }
        }
        std::mem::swap(&mut mass, &mut next_mass);
    }
    OccupancyMeasure::new(layout.clone(), values)
}

/// Occupancy of `policy` under the true kernel.
pub fn occupancy_of_policy(
    model: &LinearMixtureModel,
    policy: &StochasticPolicy,
) -> Result<OccupancyMeasure> {
    occupancy_with_kernel(model.layout(), policy, |_, s, a, sp| {
        model.transition_prob(s, a, sp)
    })
}

fn check_policy_shape(l: &SupportLayout, policy: &StochasticPolicy) -> Result<()> {
    if policy.horizon() != l.horizon()
        || policy.num_states() != l.num_states()
        || policy.num_actions() != l.num_actions()
    {
        return Err(Error::ShapeMismatch(format!(
            "policy is {}x{}x{}, layout is {}x{}x{}",
            policy.horizon(),
            policy.num_states(),
            policy.num_actions(),
            l.horizon(),
            l.num_states(),
            l.num_actions()
        )));
    }
    Ok(())
}

/// Occupancy of `policy` under per-entry stage kernels, such as
/// [`InducedModel::transition`].
pub fn occupancy_with_entry_kernel(
    layout: &Arc<SupportLayout>,
    policy: &StochasticPolicy,
    kernel: &[f64],
) -> Result<OccupancyMeasure> {
    if kernel.len() != layout.len() {
        return Err(Error::ShapeMismatch("kernel does not match layout".into()));
    }
    let l = layout.clone();
    occupancy_with_kernel(layout, policy, move |h, s, a, sp| {
        l.find(h, s, a, sp).map_or(0.0, |j| kernel[j])
    })
}
