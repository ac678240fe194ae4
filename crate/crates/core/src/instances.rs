//! Instance generators and oblivious reward schedules.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{LinearMixtureModel, RewardFunction};

/// Largest leaf count accepted by [`make_tree_mdp`].
pub const MAX_TREE_LEAVES: usize = 1_000_000;

fn dirichlet<R: Rng + ?Sized>(rng: &mut R, n: usize, concentration: f64) -> Result<Vec<f64>> {
    let g = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::param("concentration", e.to_string()))?;
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| g.sample(rng)).collect();
        let s: f64 = v.iter().sum();
        if s > 0.0 && s.is_finite() {
            v.iter_mut().for_each(|x| *x /= s);
            return Ok(v);
        }
    }
}

/// Mixture of `d` random kernels with Dirichlet rows:
/// `phi(s'|s,a) = (P_1(s'|s,a), ..., P_d(s'|s,a)) / sqrt(d)` and
/// `theta* = sqrt(d) w` for a random simplex weight `w`.
pub fn make_basis_mixture(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    norm_bound: f64,
    seed: u64,
) -> Result<LinearMixtureModel> {
    make_basis_mixture_with(
        num_states,
        num_actions,
        horizon,
        dim,
        norm_bound,
        seed,
        DEFAULT_CONCENTRATION,
    )
}

/// Dirichlet concentration of the base kernels of [`make_basis_mixture`].
pub const DEFAULT_CONCENTRATION: f64 = 1.0;

/// [`make_basis_mixture`] with a custom Dirichlet concentration.
pub fn make_basis_mixture_with(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    dim: usize,
    norm_bound: f64,
    seed: u64,
    concentration: f64,
) -> Result<LinearMixtureModel> {
    if dim == 0 {
        return Err(Error::param("dim", "must be at least 1"));
    }
    if !(concentration > 0.0) {
        return Err(Error::param("concentration", "must be positive"));
    }
    let (s_n, a_n, d) = (num_states, num_actions, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = if d == 1 {
        vec![1.0]
    } else {
        dirichlet(&mut rng, d, 1.0)?
    };
    let sd = (d as f64).sqrt();
    let theta: Vec<f64> = w.iter().map(|x| x * sd).collect();
    let norm = DVector::from_column_slice(&theta).norm();
    if norm > norm_bound {
        return Err(Error::NormBoundTooSmall {
            norm,
            bound: norm_bound,
        });
    }
    let mut blocks = vec![0.0; s_n * a_n * s_n * d];
    for i in 0..d {
        for s in 0..s_n {
            for a in 0..a_n {
                let row = dirichlet(&mut rng, s_n, concentration)?;
                for (sp, p) in row.iter().enumerate() {
                    blocks[((s * a_n + a) * s_n + sp) * d + i] = p / sd;
                }
            }
        }
    }
    let theta = DVector::from_vec(theta);
    LinearMixtureModel::from_blocks(s_n, a_n, horizon, d, 0, blocks, theta, norm_bound)
}

/// Indexing of a complete `A`-ary tree of the given depth, states numbered
/// layer by layer from the root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeShape {
    pub num_actions: usize,
    pub depth: usize,
}

impl TreeShape {
    pub fn new(num_actions: usize, depth: usize) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::param("num_actions", "tree needs at least 2 actions"));
        }
        if depth == 0 {
            return Err(Error::param("depth", "tree needs depth >= 1"));
        }
        if num_actions
            .checked_pow(depth as u32)
            .is_none_or(|n| n > MAX_TREE_LEAVES)
        {
            return Err(Error::InstanceTooLarge(format!(
                "{num_actions}^{depth} leaves exceeds {MAX_TREE_LEAVES}"
            )));
        }
        Ok(Self { num_actions, depth })
    }

    pub fn layer_size(&self, layer: usize) -> usize {
        self.num_actions.pow(layer as u32)
    }

    /// Index of the first state of `layer`.
    pub fn layer_start(&self, layer: usize) -> usize {
        (self.layer_size(layer) - 1) / (self.num_actions - 1)
    }

    pub fn num_states(&self) -> usize {
        self.layer_start(self.depth + 1)
    }

    pub fn state(&self, layer: usize, pos: usize) -> usize {
        self.layer_start(layer) + pos
    }

    /// `(layer, position)` of a state.
    pub fn locate(&self, state: usize) -> (usize, usize) {
        let mut l = 0;
        while self.layer_start(l + 1) <= state {
            l += 1;
        }
        (l, state - self.layer_start(l))
    }

    pub fn child(&self, layer: usize, pos: usize, action: usize) -> usize {
        self.state(layer + 1, pos * self.num_actions + action)
    }
}

/// Complete `A`-ary tree with deterministic transitions, `d = 1`, `theta* = 1`;
/// leaves absorb.
pub fn make_tree_mdp(num_actions: usize, depth: usize) -> Result<LinearMixtureModel> {
    let t = TreeShape::new(num_actions, depth)?;
    let s_n = t.num_states();
    let a_n = num_actions;
    let mut blocks = vec![0.0; s_n * a_n * s_n];
    for s in 0..s_n {
        let (l, m) = t.locate(s);
        for a in 0..a_n {
            let next = if l == depth { s } else { t.child(l, m, a) };
            blocks[(s * a_n + a) * s_n + next] = 1.0;
        }
    }
    LinearMixtureModel::from_blocks(
        s_n,
        a_n,
        depth,
        1,
        0,
        blocks,
        DVector::from_element(1, 1.0),
        1.0,
    )
}

/// Where expert rewards are placed on a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertLayout {
    /// One expert per last-layer edge; its coin times `1/H` is the edge reward.
    LastLayer,
    /// One expert per node of layer `H/2`; every edge in its subtree pays the
    /// coin times `1/H`, earlier edges pay nothing. Needs even `H`.
    TwoStage,
}

/// Reward sequence family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScheduleKind {
    /// The same table every episode.
    Fixed { reward: Vec<f64> },
    /// Fair coins per expert, independent across episodes.
    IidExpertRademacher { tree: TreeShape, layout: ExpertLayout },
    /// `r^k(s,a) = Bernoulli(mu(s,a)) / H`, drawn once per episode.
    ObliviousSequence { means: Vec<f64> },
    /// A fixed table; the adversarial problem reduces to a stochastic one.
    DegenerateFixed { reward: Vec<f64> },
}

/// Serialized schedule, enough to replay every reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleDocument {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub episodes: usize,
    pub seed: u64,
    pub schedule: ScheduleKind,
}

/// Oblivious reward schedule. Reward `k` becomes available only after
/// [`Self::commit_trajectory`] has been called for episode `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarySchedule {
    doc: ScheduleDocument,
    committed: usize,
}

impl AdversarySchedule {
    fn build(doc: ScheduleDocument) -> Result<Self> {
        let table_len = doc.num_states * doc.num_actions;
        match &doc.schedule {
            ScheduleKind::Fixed { reward } | ScheduleKind::DegenerateFixed { reward } => {
                RewardFunction::new(doc.num_states, doc.num_actions, reward.clone(), doc.horizon)?;
            }
            ScheduleKind::ObliviousSequence { means } => {
                if means.len() != table_len || means.iter().any(|m| !(0.0..=1.0).contains(m)) {
                    return Err(Error::Schedule("means must be S*A values in [0, 1]".into()));
                }
            }
            ScheduleKind::IidExpertRademacher { tree, layout } => {
                if tree.num_states() != doc.num_states
                    || tree.num_actions != doc.num_actions
                    || tree.depth != doc.horizon
                {
                    return Err(Error::Schedule(
                        "expert schedule needs the matching tree model".into(),
                    ));
                }
                if *layout == ExpertLayout::TwoStage && !doc.horizon.is_multiple_of(2) {
                    return Err(Error::Schedule(
                        "two-stage expert layout needs an even horizon".into(),
                    ));
                }
            }
        }
        Ok(Self { doc, committed: 0 })
    }

    /// Same reward every episode.
    pub fn fixed(model: &LinearMixtureModel, episodes: usize, reward: &RewardFunction) -> Result<Self> {
        Self::build(ScheduleDocument {
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            horizon: model.horizon(),
            episodes,
            seed: 0,
            schedule: ScheduleKind::Fixed {
                reward: reward.as_slice().to_vec(),
            },
        })
    }

    /// Fixed reward drawn once from `U[0, 1/H]`.
    pub fn fixed_random(model: &LinearMixtureModel, episodes: usize, seed: u64) -> Result<Self> {
        let r = random_reward(model.num_states(), model.num_actions(), model.horizon(), seed)?;
        let mut s = Self::fixed(model, episodes, &r)?;
        s.doc.seed = seed;
        Ok(s)
    }

    /// Fixed reward labelled as the degenerate adversary.
    pub fn degenerate_fixed(
        model: &LinearMixtureModel,
        episodes: usize,
        reward: &RewardFunction,
    ) -> Result<Self> {
        Self::build(ScheduleDocument {
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            horizon: model.horizon(),
            episodes,
            seed: 0,
            schedule: ScheduleKind::DegenerateFixed {
                reward: reward.as_slice().to_vec(),
            },
        })
    }

    /// Bernoulli rewards around means drawn once from `U[0, 1]`.
    pub fn oblivious(model: &LinearMixtureModel, episodes: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let means = (0..model.num_states() * model.num_actions())
            .map(|_| rng.random::<f64>())
            .collect();
        Self::build(ScheduleDocument {
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            horizon: model.horizon(),
            episodes,
            seed,
            schedule: ScheduleKind::ObliviousSequence { means },
        })
    }

    /// I.i.d. fair-coin expert rewards on a tree model.
    pub fn expert(
        model: &LinearMixtureModel,
        tree: TreeShape,
        episodes: usize,
        layout: ExpertLayout,
        seed: u64,
    ) -> Result<Self> {
        Self::build(ScheduleDocument {
            num_states: model.num_states(),
            num_actions: model.num_actions(),
            horizon: model.horizon(),
            episodes,
            seed,
            schedule: ScheduleKind::IidExpertRademacher { tree, layout },
        })
    }

    pub fn from_document(doc: ScheduleDocument) -> Result<Self> {
        Self::build(doc)
    }

    pub fn document(&self) -> &ScheduleDocument {
        &self.doc
    }

    pub fn episodes(&self) -> usize {
        self.doc.episodes
    }

    pub fn kind(&self) -> &ScheduleKind {
        &self.doc.schedule
    }

    /// Marks episode `k` as played. Episodes must be committed in order.
    pub fn commit_trajectory(&mut self, k: usize) -> Result<()> {
        if k != self.committed {
            return Err(Error::Schedule(format!(
                "episode {k} committed out of order (next is {})",
                self.committed
            )));
        }
        if k >= self.doc.episodes {
            return Err(Error::Schedule(format!(
                "episode {k} beyond the horizon of {} episodes",
                self.doc.episodes
            )));
        }
        self.committed += 1;
        Ok(())
    }

    /// Reward of episode `k`, available once the episode has been committed.
    pub fn reveal(&self, k: usize) -> Result<RewardFunction> {
        if k >= self.committed {
            return Err(Error::Schedule(format!(
                "reward {k} requested before its trajectory was committed"
            )));
        }
        self.generate(k)
    }

    /// Fair coins of the experts in episode `k` (expert schedules only),
    /// subject to the same reveal rule.
    pub fn expert_coins(&self, k: usize) -> Result<Vec<f64>> {
        if k >= self.committed {
            return Err(Error::Schedule(format!(
                "reward {k} requested before its trajectory was committed"
            )));
        }
        match &self.doc.schedule {
            ScheduleKind::IidExpertRademacher { tree, layout } => {
                Ok(self.coins(k, expert_count(tree, *layout)))
            }
            _ => Err(Error::Schedule("not an expert schedule".into())),
        }
    }

    fn episode_rng(&self, k: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.doc.seed);
        rng.set_stream(k as u64 + 1);
        rng
    }

    fn coins(&self, k: usize, n: usize) -> Vec<f64> {
        let mut rng = self.episode_rng(k);
        (0..n)
            .map(|_| if rng.random::<bool>() { 1.0 } else { 0.0 })
            .collect()
    }

    fn generate(&self, k: usize) -> Result<RewardFunction> {
        let d = &self.doc;
        let cap = 1.0 / d.horizon as f64;
        let values = match &d.schedule {
            ScheduleKind::Fixed { reward } | ScheduleKind::DegenerateFixed { reward } => {
                reward.clone()
            }
            ScheduleKind::ObliviousSequence { means } => {
                let mut rng = self.episode_rng(k);
                means
                    .iter()
                    .map(|&m| if rng.random::<f64>() < m { cap } else { 0.0 })
                    .collect()
            }
            ScheduleKind::IidExpertRademacher { tree, layout } => {
                let coins = self.coins(k, expert_count(tree, *layout));
                expert_reward_table(tree, *layout, &coins, cap)
            }
        };
        RewardFunction::new(d.num_states, d.num_actions, values, d.horizon)
    }
}

/// Number of experts in a layout.
pub fn expert_count(tree: &TreeShape, layout: ExpertLayout) -> usize {
    match layout {
        ExpertLayout::LastLayer => tree.layer_size(tree.depth),
        ExpertLayout::TwoStage => tree.layer_size(tree.depth / 2),
    }
}

/// Per-`(s, a)` reward table for the given expert coins.
pub fn expert_reward_table(
    tree: &TreeShape,
    layout: ExpertLayout,
    coins: &[f64],
    cap: f64,
) -> Vec<f64> {
    let a_n = tree.num_actions;
    let mut values = vec![0.0; tree.num_states() * a_n];
    match layout {
        ExpertLayout::LastLayer => {
            let l = tree.depth - 1;
            for m in 0..tree.layer_size(l) {
                let s = tree.state(l, m);
                for a in 0..a_n {
                    values[s * a_n + a] = coins[m * a_n + a] * cap;
                }
            }
        }
        ExpertLayout::TwoStage => {
            let half = tree.depth / 2;
            for l in half..tree.depth {
                let span = tree.layer_size(l - half);
                for m in 0..tree.layer_size(l) {
                    let s = tree.state(l, m);
                    let c = coins[m / span] * cap;
                    for a in 0..a_n {
                        values[s * a_n + a] = c;
                    }
                }
            }
        }
    }
    values
}

/// Reward table with entries drawn from `U[0, 1/H]`.
pub fn random_reward(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    seed: u64,
) -> Result<RewardFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = 1.0 / horizon as f64;
    let values = (0..num_states * num_actions)
        .map(|_| rng.random::<f64>() * cap)
        .collect();
    RewardFunction::new(num_states, num_actions, values, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tree_indexing() {
        let t = TreeShape::new(2, 2).unwrap();
        assert_eq!(t.num_states(), 7);
        assert_eq!(t.child(0, 0, 1), 2);
        assert_eq!(t.child(1, 1, 0), 5);
        assert_eq!(t.locate(5), (2, 2));
        let t3 = TreeShape::new(3, 3).unwrap();
        assert_eq!(t3.num_states(), 40);
    }

    #[test]
    fn reveal_requires_commit() {
        let m = make_tree_mdp(2, 2).unwrap();
        let t = TreeShape::new(2, 2).unwrap();
        let mut s = AdversarySchedule::expert(&m, t, 3, ExpertLayout::TwoStage, 1).unwrap();
        assert!(s.reveal(0).is_err());
        s.commit_trajectory(0).unwrap();
        assert!(s.reveal(0).is_ok());
        assert!(s.commit_trajectory(2).is_err());
    }

    #[test]
    fn two_stage_rewards_live_in_subtrees() {
        let t = TreeShape::new(2, 4).unwrap();
        let coins = [1.0, 0.0, 0.0, 1.0];
        let v = expert_reward_table(&t, ExpertLayout::TwoStage, &coins, 0.25);
        // layers 0 and 1 pay nothing
        for s in 0..t.layer_start(2) {
            assert_eq!(v[2 * s], 0.0);
        }
        // layer 3 node 7 descends from layer-2 node 3
        assert_eq!(v[2 * t.state(3, 7)], 0.25);
        assert_eq!(v[2 * t.state(3, 2)], 0.0);
    }
}
