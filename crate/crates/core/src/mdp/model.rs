use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layout::SupportLayout;
use crate::error::{Error, Result};

/// Tolerance on `sum_s' P(s'|s,a) = 1`.
pub const KERNEL_SUM_TOL: f64 = 1e-12;
/// Slack on `||phi_V|| <= 1` and `||theta*|| <= B`.
pub const NORM_TOL: f64 = 1e-12;
/// Number of random value vectors probed when checking feature norms.
pub const NORM_PROBES: usize = 100;

/// Episodic MDP whose kernel is `P(s'|s,a) = <phi(s'|s,a), theta*>`.
///
/// Features are stored per `(s, a)` block so the successors of a pair are
/// contiguous; the serialized form uses `(s', s, a, i)` row-major order.
#[derive(Debug, Clone)]
pub struct LinearMixtureModel {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    initial_state: usize,
    features: Vec<f64>,
    theta_star: DVector<f64>,
    norm_bound: f64,
    successors: Vec<Vec<usize>>,
    kernel: Vec<f64>,
    layout: Arc<SupportLayout>,
}

/// Serialized model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub dim: usize,
    #[serde(default)]
    pub initial_state: usize,
    /// `phi(s'|s,a)_i` in row-major `(s', s, a, i)` order.
    pub features: Vec<f64>,
    pub theta_star: Vec<f64>,
    pub norm_bound: f64,
}

impl LinearMixtureModel {
    /// Builds and validates a model. `features` is row-major `(s', s, a, i)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        initial_state: usize,
        features: &[f64],
        theta_star: &[f64],
        norm_bound: f64,
    ) -> Result<Self> {
        let (s_n, a_n, d) = (num_states, num_actions, dim);
        if s_n == 0 || a_n == 0 || horizon == 0 || d == 0 {
            return Err(Error::InvalidModel(
                "dimensions must all be positive".into(),
            ));
        }
        if initial_state >= s_n {
            return Err(Error::IndexOutOfRange {
                what: "initial_state",
                index: initial_state,
                limit: s_n,
            });
        }
        let expected = s_n
            .checked_mul(s_n)
            .and_then(|x| x.checked_mul(a_n))
            .and_then(|x| x.checked_mul(d))
            .ok_or_else(|| Error::InstanceTooLarge("feature tensor size overflows".into()))?;
        if features.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "features has {} entries, expected {expected} = S*S*A*d",
                features.len()
            )));
        }
        if theta_star.len() != d {
            return Err(Error::ShapeMismatch(format!(
                "theta_star has {} entries, expected d = {d}",
                theta_star.len()
            )));
        }
        if !(norm_bound > 0.0) || !norm_bound.is_finite() {
            return Err(Error::param("norm_bound", "must be positive and finite"));
        }
        if features.iter().chain(theta_star).any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel("non-finite feature or parameter".into()));
        }
        let theta = DVector::from_column_slice(theta_star);
        let norm = theta.norm();
        if norm > norm_bound + NORM_TOL {
            return Err(Error::NormBoundTooSmall {
                norm,
                bound: norm_bound,
            });
        }

        // reorder (s', s, a, i) -> (s, a, s', i)
        let mut blocks = vec![0.0; expected];
        for sp in 0..s_n {
            for s in 0..s_n {
                for a in 0..a_n {
                    let src = ((sp * s_n + s) * a_n + a) * d;
                    let dst = ((s * a_n + a) * s_n + sp) * d;
                    blocks[dst..dst + d].copy_from_slice(&features[src..src + d]);
                }
            }
        }
        Self::from_blocks(
            s_n,
            a_n,
            horizon,
            d,
            initial_state,
            blocks,
            theta,
            norm_bound,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_blocks(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        initial_state: usize,
        features: Vec<f64>,
        theta_star: DVector<f64>,
        norm_bound: f64,
    ) -> Result<Self> {
        let (s_n, a_n, d) = (num_states, num_actions, dim);
        let mut successors = Vec::with_capacity(s_n * a_n);
        let mut kernel = vec![0.0; s_n * a_n * s_n];
        for s in 0..s_n {
            for a in 0..a_n {
                let mut succ = Vec::new();
                let mut total = 0.0;
                for sp in 0..s_n {
                    let off = ((s * a_n + a) * s_n + sp) * d;
                    let f = &features[off..off + d];
                    if f.iter().any(|&x| x != 0.0) {
                        succ.push(sp);
                    }
                    let p: f64 = f.iter().zip(theta_star.iter()).map(|(x, t)| x * t).sum();
                    if p < -KERNEL_SUM_TOL {
                        return Err(Error::InvalidModel(format!(
                            "negative transition probability {p} for (s={s}, a={a}, s'={sp})"
                        )));
                    }
                    let p = p.max(0.0);
                    kernel[(s * a_n + a) * s_n + sp] = p;
                    total += p;
                }
                if succ.is_empty() {
                    return Err(Error::DegenerateFeatures {
                        state: s,
                        action: a,
                    });
                }
                if (total - 1.0).abs() > KERNEL_SUM_TOL {
                    return Err(Error::InvalidModel(format!(
                        "transition probabilities for (s={s}, a={a}) sum to {total}"
                    )));
                }
                successors.push(succ);
            }
        }
        let layout = Arc::new(SupportLayout::new(
            horizon,
            s_n,
            a_n,
            initial_state,
            |s, a| successors[s * a_n + a].clone(),
        )?);
        let model = Self {
            num_states: s_n,
            num_actions: a_n,
            horizon,
            dim: d,
            initial_state,
            features,
            theta_star,
            norm_bound,
            successors,
            kernel,
            layout,
        };
        model.check_feature_norms()?;
        Ok(model)
    }

    /// Checks `||phi_V(s,a)|| <= 1` for `V = 1`, indicator vectors and
    /// random `V` in `[0,1]^S`. Skipped when the per-coordinate absolute row
    /// sums already certify the bound for every `V` in the cube.
    fn check_feature_norms(&self) -> Result<()> {
        let (s_n, a_n, d) = (self.num_states, self.num_actions, self.dim);
        let mut certified = true;
        for s in 0..s_n {
            for a in 0..a_n {
                let mut acc = vec![0.0; d];
                for &sp in self.successors(s, a) {
                    for (i, x) in self.phi(sp, s, a).iter().enumerate() {
                        acc[i] += x.abs();
                    }
                }
                if acc.iter().map(|x| x * x).sum::<f64>() > 1.0 + NORM_TOL {
                    certified = false;
                }
            }
        }
        if certified {
            return Ok(());
        }
        let mut probes: Vec<Vec<f64>> = vec![vec![1.0; s_n]];
        for sp in 0..s_n.min(64) {
            let mut v = vec![0.0; s_n];
            v[sp] = 1.0;
            probes.push(v);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..NORM_PROBES {
            probes.push((0..s_n).map(|_| rng.random::<f64>()).collect());
        }
        for v in &probes {
            for s in 0..s_n {
                for a in 0..a_n {
                    let n = self.phi_v(s, a, v).norm();
                    if n > 1.0 + NORM_TOL {
                        return Err(Error::InvalidModel(format!(
                            "||phi_V(s={s}, a={a})|| = {n} exceeds 1"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        Self::new(
            doc.num_states,
            doc.num_actions,
            doc.horizon,
            doc.dim,
            doc.initial_state,
            &doc.features,
            &doc.theta_star,
            doc.norm_bound,
        )
    }

    pub fn to_document(&self) -> ModelDocument {
        let (s_n, a_n, d) = (self.num_states, self.num_actions, self.dim);
        let mut features = vec![0.0; s_n * s_n * a_n * d];
        for s in 0..s_n {
            for a in 0..a_n {
                for sp in 0..s_n {
                    let dst = ((sp * s_n + s) * a_n + a) * d;
                    features[dst..dst + d].copy_from_slice(self.phi(sp, s, a));
                }
            }
        }
        ModelDocument {
            num_states: s_n,
            num_actions: a_n,
            horizon: self.horizon,
            dim: d,
            initial_state: self.initial_state,
            features,
            theta_star: self.theta_star.iter().copied().collect(),
            norm_bound: self.norm_bound,
        }
    }

    /// Same features with a different horizon.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        Self::from_blocks(
            self.num_states,
            self.num_actions,
            horizon,
            self.dim,
            self.initial_state,
            self.features.clone(),
            self.theta_star.clone(),
            self.norm_bound,
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }
    pub fn num_actions(&self) -> usize {
        self.num_actions
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn initial_state(&self) -> usize {
        self.initial_state
    }
    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }
    pub fn layout(&self) -> &Arc<SupportLayout> {
        &self.layout
    }

    /// `phi(s'|s,a)` as a slice of length `d`.
    #[inline]
    pub fn phi(&self, next: usize, state: usize, action: usize) -> &[f64] {
        let off = ((state * self.num_actions + action) * self.num_states + next) * self.dim;
        &self.features[off..off + self.dim]
    }

    /// States `s'` with a nonzero feature vector `phi(s'|s,a)`.
    #[inline]
    pub fn successors(&self, state: usize, action: usize) -> &[usize] {
        &self.successors[state * self.num_actions + action]
    }

    /// `P(s'|s,a)` under `theta*`.
    #[inline]
    pub fn transition_prob(&self, state: usize, action: usize, next: usize) -> f64 {
        self.kernel[(state * self.num_actions + action) * self.num_states + next]
    }

    /// `P(.|s,a)` under `theta*`.
    #[inline]
    pub fn kernel_row(&self, state: usize, action: usize) -> &[f64] {
        let off = (state * self.num_actions + action) * self.num_states;
        &self.kernel[off..off + self.num_states]
    }

    /// `<phi(s'|s,a), theta>` for an arbitrary parameter.
    pub fn transition_prob_under(
        &self,
        theta: &DVector<f64>,
        state: usize,
        action: usize,
        next: usize,
    ) -> f64 {
        self.phi(next, state, action)
            .iter()
            .zip(theta.iter())
            .map(|(x, t)| x * t)
            .sum()
    }

    /// `phi_V(s,a) = sum_s' phi(s'|s,a) V(s')`.
    pub fn phi_v(&self, state: usize, action: usize, v: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim);
        self.phi_v_into(state, action, v, out.as_mut_slice());
        out
    }

    pub fn phi_v_into(&self, state: usize, action: usize, v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for &sp in self.successors(state, action) {
            let w = v[sp];
            if w != 0.0 {
                for (o, x) in out.iter_mut().zip(self.phi(sp, state, action)) {
                    *o += w * x;
                }
            }
        }
    }

    /// `[P V](s,a)` under `theta*`.
    pub fn expect(&self, state: usize, action: usize, v: &[f64]) -> f64 {
        let row = self.kernel_row(state, action);
        self.successors(state, action)
            .iter()
            .map(|&sp| row[sp] * v[sp])
            .sum()
    }

    /// `[V V](s,a) = [P V^2](s,a) - ([P V](s,a))^2` under `theta*`.
    pub fn conditional_variance(&self, state: usize, action: usize, v: &[f64]) -> f64 {
        let row = self.kernel_row(state, action);
        let mean = self.expect(state, action, v);
        // centred form avoids cancellation
        self.successors(state, action)
            .iter()
            .map(|&sp| row[sp] * (v[sp] - mean) * (v[sp] - mean))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> LinearMixtureModel {
        // P_1 always goes to 0, P_2 always goes to 1, mixed 0.3 / 0.7
        let (s_n, a_n, d) = (2, 1, 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut f = vec![0.0; s_n * s_n * a_n * d];
        for s in 0..s_n {
            f[(s * a_n) * d] = r;
            f[((s_n + s) * a_n) * d + 1] = r;
        }
        let t = [0.3 / r, 0.7 / r];
        LinearMixtureModel::new(s_n, a_n, 3, d, 0, &f, &t, 2.0).unwrap()
    }

    #[test]
    fn kernel_and_roundtrip() {
        let m = two_state();
        assert!((m.transition_prob(0, 0, 1) - 0.7).abs() < 1e-15);
        let doc = m.to_document();
        let m2 = LinearMixtureModel::from_document(&doc).unwrap();
        assert_eq!(m2.to_document(), doc);
    }

    #[test]
    fn variance_matches_definition() {
        let m = two_state();
        let v = [0.2, 0.9];
        let mean = 0.3 * 0.2 + 0.7 * 0.9;
        let second = 0.3 * 0.04 + 0.7 * 0.81;
        assert!((m.conditional_variance(1, 0, &v) - (second - mean * mean)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_theta_norm() {
        let m = two_state();
        let mut doc = m.to_document();
        doc.norm_bound = 0.9;
        assert!(matches!(
            LinearMixtureModel::from_document(&doc),
            Err(Error::NormBoundTooSmall { .. })
        ));
    }

    #[test]
    fn rejects_unnormalized_kernel() {
        let m = two_state();
        let mut doc = m.to_document();
        doc.theta_star[1] *= 0.9;
        assert!(LinearMixtureModel::from_document(&doc).is_err());
    }
}
