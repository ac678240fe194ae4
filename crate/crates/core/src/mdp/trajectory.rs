use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::LinearMixtureModel;
use super::policy::StochasticPolicy;
use super::reward::RewardFunction;

/// States `s_1..s_{H+1}` and actions `a_1..a_H` of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn realized_return(&self, reward: &RewardFunction) -> f64 {
        self.actions
            .iter()
            .zip(&self.states)
            .map(|(&a, &s)| reward.get(s, a))
            .sum()
    }
}

/// Inverse-CDF draw from a discrete distribution given as weights.
pub fn sample_index<R: Rng + ?Sized>(rng: &mut R, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Rolls out `policy` under the true kernel.
pub fn sample_path<R: Rng + ?Sized>(
    model: &LinearMixtureModel,
    policy: &StochasticPolicy,
    rng: &mut R,
) -> Trajectory {
    let h_n = model.horizon();
    let mut states = Vec::with_capacity(h_n + 1);
    let mut actions = Vec::with_capacity(h_n);
    let mut s = model.initial_state();
    states.push(s);
    for h in 0..h_n {
        let a = sample_index(rng, policy.row(h, s).iter().copied());
        let succ = model.successors(s, a);
        let row = model.kernel_row(s, a);
        let i = sample_index(rng, succ.iter().map(|&sp| row[sp]));
        s = succ[i];
        actions.push(a);
        states.push(s);
    }
    Trajectory { states, actions }
}

/// One seeded episode and its realized return.
pub fn sample_episode(
    model: &LinearMixtureModel,
    policy: &StochasticPolicy,
    reward: &RewardFunction,
    seed: u64,
) -> (Trajectory, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = sample_path(model, policy, &mut rng);
    let g = t.realized_return(reward);
    (t, g)
}
