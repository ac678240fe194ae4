//! Variance-weighted value-targeted regression: moment bank, high-order
//! moment variance bounds, confidence radius and the optimistic backup.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, SpdFactor};
use crate::mdp::{LinearMixtureModel, RewardFunction, StochasticPolicy, ValueTable};
use crate::projection::ConfidenceSet;

/// Regression and variance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VtrParams {
    pub lambda: f64,
    pub xi: f64,
    pub gamma: f64,
    pub levels: usize,
    pub delta: f64,
    pub norm_bound: f64,
}

/// `ceil(log2(4 K H))`.
pub fn default_levels(episodes: usize, horizon: usize) -> usize {
    ((4.0 * episodes as f64 * horizon as f64).log2().ceil() as usize).max(1)
}

impl VtrParams {
    /// `xi = sqrt(d / (K H))`, `gamma = d^{-1/4}`, `lambda = d / B^2`,
    /// `M = ceil(log2(4 K H))`.
    pub fn defaults(dim: usize, horizon: usize, episodes: usize, norm_bound: f64, delta: f64) -> Self {
        let d = dim as f64;
        Self {
            lambda: d / (norm_bound * norm_bound),
            xi: (d / (episodes as f64 * horizon as f64)).sqrt(),
            gamma: d.powf(-0.25),
            levels: default_levels(episodes, horizon),
            delta,
            norm_bound,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda", self.lambda),
            ("xi", self.xi),
            ("gamma", self.gamma),
            ("delta", self.delta),
            ("norm_bound", self.norm_bound),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if self.levels == 0 {
            return Err(Error::param("levels", "must be at least 1"));
        }
        Ok(())
    }
}

/// The three summands of the confidence radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusTerms {
    pub deviation: f64,
    pub range: f64,
    pub bias: f64,
}

impl RadiusTerms {
    pub fn total(&self) -> f64 {
        self.deviation + self.range + self.bias
    }
}

/// Inputs of the confidence radius other than the episode index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusParams {
    pub dim: usize,
    pub horizon: usize,
    pub xi: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub norm_bound: f64,
    pub delta: f64,
}

impl RadiusParams {
    pub fn from_vtr(p: &VtrParams, dim: usize, horizon: usize) -> Self {
        Self {
            dim,
            horizon,
            xi: p.xi,
            gamma: p.gamma,
            lambda: p.lambda,
            norm_bound: p.norm_bound,
            delta: p.delta,
        }
    }
}

/// Signature of a confidence-radius rule.
pub type RadiusFn = fn(usize, &RadiusParams) -> Result<f64>;

/// Terms of
/// `12 sqrt(d log(1 + kH/(xi^2 d lambda)) log(L)) + 30 log(L) / gamma^2 + sqrt(lambda) B`
/// with `L = 32 (log(gamma^2/xi) + 1) k^2 H^2 / delta`.
pub fn confidence_radius_terms(k: usize, p: &RadiusParams) -> Result<RadiusTerms> {
    if k == 0 {
        return Err(Error::Domain("episode index starts at 1".into()));
    }
    for (name, v) in [
        ("xi", p.xi),
        ("gamma", p.gamma),
        ("lambda", p.lambda),
        ("norm_bound", p.norm_bound),
        ("delta", p.delta),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let (k, d, h) = (k as f64, p.dim as f64, p.horizon as f64);
    let inner = (p.gamma * p.gamma / p.xi).ln() + 1.0;
    let arg = 32.0 * inner * k * k * h * h / p.delta;
    if !(inner > 0.0) || !(arg > 1.0) {
        return Err(Error::Domain(format!(
            "confidence radius log argument out of range ({arg})"
        )));
    }
    let log_l = arg.ln();
    let log_det = (1.0 + k * h / (p.xi * p.xi * d * p.lambda)).ln();
    Ok(RadiusTerms {
        deviation: 12.0 * (d * log_det * log_l).sqrt(),
        range: 30.0 * log_l / (p.gamma * p.gamma),
        bias: p.lambda.sqrt() * p.norm_bound,
    })
}

/// Confidence radius for episode `k` (1-based).
pub fn confidence_radius(k: usize, p: &RadiusParams) -> Result<f64> {
    confidence_radius_terms(k, p).map(|t| t.total())
}

/// Statistics of one moment level.
#[derive(Debug, Clone)]
pub struct MomentLevel {
    pub running_cov: DMatrix<f64>,
    pub running_resp: DVector<f64>,
    pub episode_cov: DMatrix<f64>,
    pub episode_resp: DVector<f64>,
    pub estimate: DVector<f64>,
    episode_factor: SpdFactor,
}

/// Weighted ridge statistics for the moments `V^{2^m}`, `m = 0..M`.
#[derive(Debug, Clone)]
pub struct MomentBank {
    dim: usize,
    params: VtrParams,
    levels: Vec<MomentLevel>,
}

impl MomentBank {
    pub fn new(dim: usize, params: VtrParams) -> Result<Self> {
        params.validate()?;
        let cov = DMatrix::identity(dim, dim) * params.lambda;
        let factor = SpdFactor::new(&cov)?;
        let level = MomentLevel {
            running_cov: cov.clone(),
            running_resp: DVector::zeros(dim),
            episode_cov: cov,
            episode_resp: DVector::zeros(dim),
            estimate: DVector::zeros(dim),
            episode_factor: factor,
        };
        Ok(Self {
            dim,
            params,
            levels: vec![level; params.levels],
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn params(&self) -> &VtrParams {
        &self.params
    }
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }
    pub fn level(&self, m: usize) -> &MomentLevel {
        &self.levels[m]
    }

    /// `theta_hat_{k,m}`.
    pub fn estimate(&self, m: usize) -> &DVector<f64> {
        &self.levels[m].estimate
    }

    /// Factor of the episode covariance `Sigma_hat_{k,m}`.
    pub fn episode_factor(&self, m: usize) -> &SpdFactor {
        &self.levels[m].episode_factor
    }

    /// Factor of the running covariance `Sigma_tilde_{k,h,m}`.
    pub fn running_factor(&self, m: usize) -> Result<SpdFactor> {
        SpdFactor::new(&self.levels[m].running_cov)
    }

    /// `Sigma~ += phi phi^T / sigma^2`, `b~ += phi target / sigma^2`.
    pub fn update(&mut self, m: usize, phi: &DVector<f64>, target: f64, sigma_sq: f64) -> Result<()> {
        if m >= self.levels.len() {
            return Err(Error::IndexOutOfRange {
                what: "level",
                index: m,
                limit: self.levels.len(),
            });
        }
        if phi.len() != self.dim {
            return Err(Error::ShapeMismatch("feature dimension".into()));
        }
        if !(sigma_sq > 0.0) || !target.is_finite() {
            return Err(Error::Domain(format!(
                "regression weight {sigma_sq} / target {target} invalid"
            )));
        }
        let l = &mut self.levels[m];
        l.running_cov.ger(1.0 / sigma_sq, phi, phi, 1.0);
        l.running_resp.axpy(target / sigma_sq, phi, 1.0);
        Ok(())
    }

    /// Copies running statistics into the episode statistics and refits.
    pub fn finish_episode(&mut self) -> Result<()> {
        for l in &mut self.levels {
            symmetrize(&mut l.running_cov);
            l.episode_cov = l.running_cov.clone();
            l.episode_resp = l.running_resp.clone();
            l.episode_factor = SpdFactor::new(&l.episode_cov)?;
            l.estimate = l.episode_factor.solve(&l.episode_resp);
        }
        Ok(())
    }

    /// `C_k` from level 0.
    pub fn confidence_set(&self, radius: f64) -> ConfidenceSet {
        let l = &self.levels[0];
        ConfidenceSet {
            center: l.estimate.clone(),
            gram: l.episode_cov.clone(),
            radius,
        }
    }

    /// 1 while `det(Sigma~_m) / det(Sigma^_m) <= 16` for every level.
    pub fn det_ratio_indicator(&self) -> Result<bool> {
        let bound = 16f64.ln();
        for l in &self.levels {
            let run = SpdFactor::new(&l.running_cov)?.log_det();
            if run - l.episode_factor.log_det() > bound + 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Whether `theta` lies in the set, with the margin `radius - distance`.
pub fn confidence_contains(set: &ConfidenceSet, theta: &DVector<f64>) -> Result<(bool, f64)> {
    if theta.len() != set.center.len() {
        return Err(Error::ShapeMismatch("parameter dimension".into()));
    }
    let margin = set.radius - set.distance(theta);
    Ok((margin >= 0.0, margin))
}

/// Output of the variance estimator for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct HomeOutput {
    /// `sigma_bar^2_{k,h,m}`.
    pub sigma_sq: Vec<f64>,
    /// Estimated variance of `V^{2^m}` (levels `0..M-1`).
    pub moment: Vec<f64>,
    /// Estimation error bonus `E_{k,h,m}` (levels `0..M-1`).
    pub error: Vec<f64>,
    /// `||phi_m||_{Sigma~_m^{-1}}` for every level.
    pub running_norm: Vec<f64>,
}

/// Variance upper bounds for every moment level.
///
/// Level `m < M-1`: `max{V + E, xi^2, gamma^2 ||phi_m||_{Sigma~^{-1}}}` where
/// `V = [<phi_{m+1}, theta_{m+1}>]_[0,1] - [<phi_m, theta_m>]_[0,1]^2` and
/// `E = min{1, 2 beta ||phi_m||_{Sigma^_m^{-1}}} + min{1, beta ||phi_{m+1}||_{Sigma^_{m+1}^{-1}}}`;
/// the top level uses `1` in place of `V + E`.
pub fn home_variances(
    phis: &[DVector<f64>],
    bank: &MomentBank,
    beta: f64,
    xi: f64,
    gamma: f64,
) -> Result<HomeOutput> {
    let m_n = bank.num_levels();
    if phis.len() != m_n {
        return Err(Error::ShapeMismatch(format!(
            "{} features for {m_n} levels",
            phis.len()
        )));
    }
    let running: Vec<f64> = (0..m_n)
        .map(|m| bank.running_factor(m).map(|f| f.inv_norm(&phis[m])))
        .collect::<Result<_>>()?;
    let episode: Vec<f64> = (0..m_n)
        .map(|m| bank.episode_factor(m).inv_norm(&phis[m]))
        .collect();
    let clip = |x: f64| x.clamp(0.0, 1.0);
    let floor = (xi * xi).max(0.0);
    let mut sigma_sq = Vec::with_capacity(m_n);
    let mut moment = Vec::with_capacity(m_n.saturating_sub(1));
    let mut error = Vec::with_capacity(m_n.saturating_sub(1));
    for m in 0..m_n.saturating_sub(1) {
        let second = clip(phis[m + 1].dot(bank.estimate(m + 1)));
        let first = clip(phis[m].dot(bank.estimate(m)));
        let v = second - first * first;
        let e = (2.0 * beta * episode[m]).min(1.0) + (beta * episode[m + 1]).min(1.0);
        moment.push(v);
        error.push(e);
        sigma_sq.push((v + e).max(floor).max(gamma * gamma * running[m]));
    }
    let top = m_n - 1;
    sigma_sq.push(1f64.max(floor).max(gamma * gamma * running[top]));
    Ok(HomeOutput {
        sigma_sq,
        moment,
        error,
        running_norm: running,
    })
}

/// `V, V^2, V^4, ...` for `levels` levels, clipped to `[0, 1]` before squaring.
pub fn moment_targets(v: &[f64], levels: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(levels);
    let mut cur: Vec<f64> = v.iter().map(|x| x.clamp(0.0, 1.0)).collect();
    for _ in 0..levels {
        let next = cur.iter().map(|x| (x * x).clamp(0.0, 1.0)).collect();
        out.push(std::mem::replace(&mut cur, next));
    }
    out
}

/// Backward pass
/// `Q_h = [r + <theta, phi_{V_{h+1}}> + beta ||phi_{V_{h+1}}||_{Sigma^{-1}}]_[0,1]`,
/// `V_h = E_{a ~ pi_h} Q_h`.
pub fn optimistic_backup(
    model: &LinearMixtureModel,
    reward: &RewardFunction,
    policy: &StochasticPolicy,
    theta: &DVector<f64>,
    gram: &SpdFactor,
    beta: f64,
) -> Result<ValueTable> {
    let (h_n, s_n, a_n, d) = (model.horizon(), model.num_states(), model.num_actions(), model.dim());
    if theta.len() != d || gram.dim() != d {
        return Err(Error::ShapeMismatch("estimator dimension".into()));
    }
    if policy.horizon() != h_n || policy.num_states() != s_n || policy.num_actions() != a_n {
        return Err(Error::ShapeMismatch("policy does not match model".into()));
    }
    if reward.num_states() != s_n || reward.num_actions() != a_n {
        return Err(Error::ShapeMismatch("reward does not match model".into()));
    }
    let mut t = ValueTable::zeros(h_n, s_n, a_n);
    let mut phi = DVector::zeros(d);
    for h in (0..h_n).rev() {
        let next = t.v_stage(h + 1).to_vec();
        for s in 0..s_n {
            let mut v = 0.0;
            for a in 0..a_n {
                model.phi_v_into(s, a, &next, phi.as_mut_slice());
                let bonus = if beta > 0.0 { beta * gram.inv_norm(&phi) } else { 0.0 };
                let q = (reward.get(s, a) + theta.dot(&phi) + bonus).clamp(0.0, 1.0);
                t.set_q(h, s, a, q);
                v += policy.prob(h, s, a) * q;
            }
            t.set_v(h, s, v);
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bias_term_is_sqrt_d() {
        let p = RadiusParams {
            dim: 4,
            horizon: 10,
            xi: (4.0f64 / 5000.0).sqrt(),
            gamma: 4f64.powf(-0.25),
            lambda: 1.0,
            norm_bound: 2.0,
            delta: 0.01,
        };
        let t = confidence_radius_terms(1, &p).unwrap();
        assert!((t.bias - 2.0).abs() < 1e-15);
        assert!(confidence_radius(2, &p).unwrap() >= t.total());
    }

    #[test]
    fn one_dimensional_ridge() {
        let params = VtrParams {
            lambda: 2.0,
            xi: 0.1,
            gamma: 1.0,
            levels: 1,
            delta: 0.1,
            norm_bound: 1.0,
        };
        let mut bank = MomentBank::new(2, params).unwrap();
        bank.update(0, &DVector::from_vec(vec![1.0, 0.0]), 0.9, 1.0).unwrap();
        bank.finish_episode().unwrap();
        assert!((bank.estimate(0)[0] - 0.9 / 3.0).abs() < 1e-15);
        assert_eq!(bank.estimate(0)[1], 0.0);
    }

    #[test]
    fn targets_square_repeatedly() {
        let t = moment_targets(&[0.5, 1.2], 3);
        assert_eq!(t[0], vec![0.5, 1.0]);
        assert_eq!(t[2], vec![0.0625, 1.0]);
    }
}
