use super::run::EpisodeRecord;
use crate::error::{Error, Result};
use crate::mdp::{policy_values, LinearMixtureModel, RewardFunction, StochasticPolicy};

/// Exact value of `comparator` under each reward, from the initial state.
pub fn comparator_values(
    model: &LinearMixtureModel,
    rewards: &[RewardFunction],
    comparator: &StochasticPolicy,
) -> Result<Vec<f64>> {
    let s1 = model.initial_state();
    rewards
        .iter()
        .map(|r| policy_values(model, r, comparator).map(|t| t.v(0, s1)))
        .collect()
}

/// Cumulative `sum_{j <= k} (comparator_j - policy_j)`.
pub fn compute_regret(records: &[EpisodeRecord]) -> Vec<f64> {
    cumulative_gaps(records.iter().map(|r| r.comparator_value - r.policy_value))
}

/// Running sums of per-episode gaps.
pub fn cumulative_gaps(gaps: impl IntoIterator<Item = f64>) -> Vec<f64> {
    gaps.into_iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .collect()
}

/// Least-squares slope and intercept of `ln y` against `ln x`, over points
/// with positive coordinates. Needs two distinct `x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if pts.len() < 2 || !(sxx > 0.0) {
        return Err(Error::Domain(
            "slope fit needs two points with distinct positive x and positive y".into(),
        ));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}
