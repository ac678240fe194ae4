use super::model::LinearMixtureModel;
use super::policy::StochasticPolicy;
use super::reward::RewardFunction;
use crate::error::{Error, Result};

/// `V_h(s)` for `h = 0..=H` (with `V_H = 0`) and `Q_h(s, a)` for `h < H`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    v: Vec<f64>,
    q: Vec<f64>,
}

impl ValueTable {
    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            horizon,
            num_states,
            num_actions,
            v: vec![0.0; (horizon + 1) * num_states],
            q: vec![0.0; horizon * num_states * num_actions],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    #[inline]
    pub fn v(&self, h: usize, s: usize) -> f64 {
        self.v[h * self.num_states + s]
    }

    #[inline]
    pub fn q(&self, h: usize, s: usize, a: usize) -> f64 {
        self.q[(h * self.num_states + s) * self.num_actions + a]
    }

    /// `V_h(.)` as a slice.
    pub fn v_stage(&self, h: usize) -> &[f64] {
        &self.v[h * self.num_states..(h + 1) * self.num_states]
    }

    pub(crate) fn set_v(&mut self, h: usize, s: usize, x: f64) {
        self.v[h * self.num_states + s] = x;
    }

    pub(crate) fn set_q(&mut self, h: usize, s: usize, a: usize, x: f64) {
        self.q[(h * self.num_states + s) * self.num_actions + a] = x;
    }
}

fn check_shapes(
    model: &LinearMixtureModel,
    reward: &RewardFunction,
    policy: Option<&StochasticPolicy>,
) -> Result<()> {
    if reward.num_states() != model.num_states() || reward.num_actions() != model.num_actions() {
        return Err(Error::ShapeMismatch("reward does not match model".into()));
    }
    if let Some(p) = policy {
        if p.horizon() != model.horizon()
            || p.num_states() != model.num_states()
            || p.num_actions() != model.num_actions()
        {
            return Err(Error::ShapeMismatch("policy does not match model".into()));
        }
    }
    Ok(())
}

/// Exact `V^pi` and `Q^pi` by backward induction under the true kernel.
pub fn policy_values(
    model: &LinearMixtureModel,
    reward: &RewardFunction,
    policy: &StochasticPolicy,
) -> Result<ValueTable> {
    check_shapes(model, reward, Some(policy))?;
    let (h_n, s_n, a_n) = (model.horizon(), model.num_states(), model.num_actions());
    let mut t = ValueTable::zeros(h_n, s_n, a_n);
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut v = 0.0;
            for a in 0..a_n {
                let q = reward.get(s, a) + model.expect(s, a, t.v_stage(h + 1));
                t.set_q(h, s, a, q);
                v += policy.prob(h, s, a) * q;
            }
            t.set_v(h, s, v);
        }
    }
    Ok(t)
}

/// Optimal values and a greedy deterministic policy (lowest index on ties).
pub fn optimal_values(
    model: &LinearMixtureModel,
    reward: &RewardFunction,
) -> Result<(ValueTable, StochasticPolicy)> {
    check_shapes(model, reward, None)?;
    greedy_on_table(model, reward.as_slice())
}

/// Best fixed deterministic policy for a reward sequence and its total value
/// `sum_k V^pi_{k,1}(s1)`, via backward induction on the summed reward.
pub fn best_hindsight_policy(
    model: &LinearMixtureModel,
    rewards: &[RewardFunction],
) -> Result<(StochasticPolicy, f64)> {
    let mut total = vec![0.0; model.num_states() * model.num_actions()];
    for r in rewards {
        check_shapes(model, r, None)?;
        total.iter_mut().zip(r.as_slice()).for_each(|(t, x)| *t += x);
    }
    let (t, pi) = greedy_on_table(model, &total)?;
    Ok((pi, t.v(0, model.initial_state())))
}

fn greedy_on_table(model: &LinearMixtureModel, reward: &[f64]) -> Result<(ValueTable, StochasticPolicy)> {
    let (h_n, s_n, a_n) = (model.horizon(), model.num_states(), model.num_actions());
    let mut t = ValueTable::zeros(h_n, s_n, a_n);
    let mut actions = vec![0; h_n * s_n];
    for h in (0..h_n).rev() {
        for s in 0..s_n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..a_n {
                let q = reward[s * a_n + a] + model.expect(s, a, t.v_stage(h + 1));
                t.set_q(h, s, a, q);
                if q > best {
                    best = q;
                    actions[h * s_n + s] = a;
                }
            }
            t.set_v(h, s, best);
        }
    }
    let pi = StochasticPolicy::deterministic(h_n, s_n, a_n, &actions)?;
    Ok((t, pi))
}
