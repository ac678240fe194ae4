//! Mirror descent over occupancy measures with entropic Bregman projections.

use crate::error::{Error, Result};
use crate::mdp::{occupancy_to_policy, OccupancyMeasure, RewardFunction, StochasticPolicy};
use crate::projection::{kl_divergence, DykstraConfig, DykstraReport, FeasibleSet};

/// `w_h(s,a,s') = z_h(s,a,s') exp(alpha r(s,a))`.
pub fn exp_reward_step(z: &OccupancyMeasure, reward: &RewardFunction, alpha: f64) -> OccupancyMeasure {
    let l = z.layout().clone();
    let mut w = z.clone();
    let vals = w.values_mut();
    for h in 0..l.horizon() {
        for s in 0..l.num_states() {
            if !l.is_reachable(h, s) {
                continue;
            }
            for a in 0..l.num_actions() {
                let r = reward.get(s, a);
                if r != 0.0 && alpha != 0.0 {
                    let f = (alpha * r).exp();
                    vals[l.block(h, s, a)].iter_mut().for_each(|x| *x *= f);
                }
            }
        }
    }
    w
}

/// `D(x, y) = sum x log(x/y) - x + y`.
pub fn bregman_divergence(x: &OccupancyMeasure, y: &OccupancyMeasure) -> Result<f64> {
    if x.values().len() != y.values().len() {
        return Err(Error::ShapeMismatch("occupancy layouts differ".into()));
    }
    kl_divergence(x.values(), y.values())
}

/// Result of one mirror-descent step.
#[derive(Debug, Clone)]
pub struct OmdStep {
    pub occupancy: OccupancyMeasure,
    pub report: DykstraReport,
}

/// `z^k = argmin_{z in D_k} D(z, z^{k-1} exp(alpha r^{k-1}))`.
pub fn omd_update(
    z_prev: &OccupancyMeasure,
    r_prev: &RewardFunction,
    alpha: f64,
    set: &FeasibleSet,
    cfg: &DykstraConfig,
) -> Result<OmdStep> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param("alpha", format!("must be >= 0, got {alpha}")));
    }
    let w = exp_reward_step(z_prev, r_prev, alpha);
    let (occupancy, report) = set.project(&w, cfg)?;
    Ok(OmdStep { occupancy, report })
}

/// `pi_h(a|s) = sum_x z_h(s,a,x) / sum_{a,y} z_h(s,a,y)`; zero-mass rows
/// are uniform and returned as flagged `(h, s)` pairs.
pub fn extract_policy(z: &OccupancyMeasure) -> (StochasticPolicy, Vec<(usize, usize)>) {
    occupancy_to_policy(z)
}

/// Uniform occupancy per stage, projected once onto the normalization,
/// flow and initial-state constraints.
pub fn initial_occupancy(
    set: &FeasibleSet,
    cfg: &DykstraConfig,
) -> Result<(OccupancyMeasure, DykstraReport)> {
    let affine = FeasibleSet::affine(set.layout().clone())?;
    affine.project(&OccupancyMeasure::uniform(set.layout().clone()), cfg)
}
