use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{
    make_basis_mixture_with, make_tree_mdp, random_reward, AdversarySchedule, ExpertLayout,
    ScheduleDocument, TreeShape, DEFAULT_CONCENTRATION,
};
use crate::mdp::{LinearMixtureModel, ModelDocument, RewardFunction};
use crate::projection::{DykstraConfig, EllipsoidSolver, InnerSolver};
use crate::vtr::VtrParams;

/// Default failure probability of the confidence sets.
pub const DEFAULT_DELTA: f64 = 0.01;

/// How the MDP is obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Random mixture of `dim` Dirichlet kernels.
    BasisMixture {
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        dim: usize,
        norm_bound: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        concentration: Option<f64>,
    },
    /// Complete `num_actions`-ary deterministic tree of the given depth.
    Tree { num_actions: usize, depth: usize },
    /// A serialized model document.
    ModelFile { path: PathBuf },
}

/// Reward sequence played against the learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AdversarySpec {
    /// `r = 0` every episode.
    Zero,
    /// An explicit `(s, a)` table every episode.
    Fixed { reward: Vec<f64> },
    /// One table drawn from `U[0, 1/H]`, reused every episode.
    FixedRandom {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Fixed table (explicit or drawn like `fixed-random`) marked degenerate.
    DegenerateFixed {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        reward: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Per-entry means drawn once; each episode pays `Bernoulli(mean) / H`.
    ObliviousSequence {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// Fair-coin experts on a tree instance.
    IidExpertRademacher {
        #[serde(default = "default_layout")]
        layout: ExpertLayout,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    /// A serialized schedule document.
    ScheduleFile { path: PathBuf },
}

fn default_layout() -> ExpertLayout {
    ExpertLayout::TwoStage
}

/// Learner driven through the episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Mirror descent over the confidence-constrained occupancy set.
    #[serde(rename = "hf-o2ps")]
    HfO2ps,
    /// Mirror descent over the occupancy set of the true kernel.
    #[serde(rename = "omd-known-transition")]
    OmdKnownTransition,
    /// Uniformly random actions.
    #[serde(rename = "uniform-policy")]
    UniformPolicy,
    /// Mirror descent around the plug-in kernel of the estimate, no bonus.
    #[serde(rename = "greedy-no-bonus")]
    GreedyNoBonus,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::HfO2ps => "hf-o2ps",
            Algorithm::OmdKnownTransition => "omd-known-transition",
            Algorithm::UniformPolicy => "uniform-policy",
            Algorithm::GreedyNoBonus => "greedy-no-bonus",
        }
    }
}

/// Optional replacements for the default parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Total-variation stopping tolerance of the projection.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_sweeps: Option<usize>,
    /// Constant confidence radius in place of the episode-dependent rule.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_solver: Option<InnerSolver>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ellipsoid_solver: Option<EllipsoidSolver>,
}

/// Output formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

/// Where results are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Csv, OutputFormat::Json]
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub adversary: AdversarySpec,
    pub episodes: usize,
    pub algorithm: Algorithm,
    /// Seeds trajectory sampling, and the instance and adversary when they
    /// carry no seed of their own.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub overrides: Overrides,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Adds per-episode wall time to the records (breaks byte-identical CSVs).
    #[serde(default)]
    pub record_wall_time: bool,
    /// Adds the best fixed policy on each reward prefix to the records.
    #[serde(default)]
    pub prefix_comparator: bool,
}

/// Parameters after applying defaults and overrides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedParams {
    pub alpha: f64,
    pub vtr: VtrParams,
    pub dykstra: DykstraConfig,
    pub radius: Option<f64>,
}

impl ResolvedParams {
    /// Defaults `alpha = H / sqrt(K)` and those of [`VtrParams::defaults`],
    /// then `overrides`.
    pub fn new(model: &LinearMixtureModel, episodes: usize, overrides: &Overrides) -> Result<Self> {
        if episodes == 0 {
            return Err(Error::param("episodes", "must be at least 1"));
        }
        let (h, d) = (model.horizon(), model.dim());
        let o = overrides;
        let mut vtr = VtrParams::defaults(
            d,
            h,
            episodes,
            model.norm_bound(),
            o.delta.unwrap_or(DEFAULT_DELTA),
        );
        if let Some(x) = o.xi {
            vtr.xi = x;
        }
        if let Some(x) = o.gamma {
            vtr.gamma = x;
        }
        if let Some(x) = o.lambda {
            vtr.lambda = x;
        }
        if let Some(x) = o.levels {
            vtr.levels = x;
        }
        vtr.validate()?;
        let alpha = o.alpha.unwrap_or(h as f64 / (episodes as f64).sqrt());
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
        }
        let mut dykstra = DykstraConfig::default();
        if let Some(x) = o.tol {
            dykstra.tol = x;
        }
        if let Some(x) = o.residual_tol {
            dykstra.residual_tol = x;
        }
        if let Some(x) = o.max_sweeps {
            dykstra.max_sweeps = x;
        }
        if let Some(x) = o.inner_solver {
            dykstra.inner.solver = x;
        }
        if let Some(x) = o.ellipsoid_solver {
            dykstra.inner.ellipsoid = x;
        }
        if !(dykstra.tol > 0.0 && dykstra.residual_tol > 0.0) || dykstra.max_sweeps == 0 {
            return Err(Error::param(
                "tol",
                "projection tolerances and sweep limit must be positive",
            ));
        }
        if let Some(r) = o.radius {
            if !(r >= 0.0) {
                return Err(Error::param("radius", format!("must be >= 0, got {r}")));
            }
        }
        Ok(Self {
            alpha,
            vtr,
            dykstra,
            radius: o.radius,
        })
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        for (name, v) in [
            ("alpha", self.overrides.alpha),
            ("xi", self.overrides.xi),
            ("gamma", self.overrides.gamma),
            ("lambda", self.overrides.lambda),
            ("delta", self.overrides.delta),
            ("tol", self.overrides.tol),
            ("residual_tol", self.overrides.residual_tol),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::Config(format!("override `{name}` must be positive, got {v}")));
                }
            }
        }
        if self.overrides.levels == Some(0) || self.overrides.max_sweeps == Some(0) {
            return Err(Error::Config("`levels` and `max_sweeps` must be positive".into()));
        }
        if let Some(r) = self.overrides.radius {
            if !(r >= 0.0) {
                return Err(Error::Config(format!("override `radius` must be >= 0, got {r}")));
            }
        }
        Ok(())
    }

    /// Builds the MDP described by `instance`.
    pub fn build_model(&self) -> Result<LinearMixtureModel> {
        match &self.instance {
            InstanceSpec::BasisMixture {
                num_states,
                num_actions,
                horizon,
                dim,
                norm_bound,
                seed,
                concentration,
            } => make_basis_mixture_with(
                *num_states,
                *num_actions,
                *horizon,
                *dim,
                *norm_bound,
                seed.unwrap_or(self.seed),
                concentration.unwrap_or(DEFAULT_CONCENTRATION),
            ),
            InstanceSpec::Tree { num_actions, depth } => make_tree_mdp(*num_actions, *depth),
            InstanceSpec::ModelFile { path } => {
                let doc: ModelDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                LinearMixtureModel::from_document(&doc)
            }
        }
    }

    fn adversary_seed(&self, seed: Option<u64>) -> u64 {
        seed.unwrap_or_else(|| self.seed.wrapping_add(1))
    }

    /// Builds the reward schedule for `model`.
    pub fn build_schedule(&self, model: &LinearMixtureModel) -> Result<AdversarySchedule> {
        let k = self.episodes;
        let (s_n, a_n, h) = (model.num_states(), model.num_actions(), model.horizon());
        match &self.adversary {
            AdversarySpec::Zero => AdversarySchedule::fixed(model, k, &RewardFunction::zeros(s_n, a_n)),
            AdversarySpec::Fixed { reward } => {
                AdversarySchedule::fixed(model, k, &RewardFunction::new(s_n, a_n, reward.clone(), h)?)
            }
            AdversarySpec::FixedRandom { seed } => {
                AdversarySchedule::fixed_random(model, k, self.adversary_seed(*seed))
            }
            AdversarySpec::DegenerateFixed { reward, seed } => {
                let r = match reward {
                    Some(r) => RewardFunction::new(s_n, a_n, r.clone(), h)?,
                    None => random_reward(s_n, a_n, h, self.adversary_seed(*seed))?,
                };
                AdversarySchedule::degenerate_fixed(model, k, &r)
            }
            AdversarySpec::ObliviousSequence { seed } => {
                AdversarySchedule::oblivious(model, k, self.adversary_seed(*seed))
            }
            AdversarySpec::IidExpertRademacher { layout, seed } => {
                let tree = match &self.instance {
                    InstanceSpec::Tree { num_actions, depth } => TreeShape::new(*num_actions, *depth)?,
                    _ => {
                        return Err(Error::Config(
                            "expert rewards need a tree instance".into(),
                        ))
                    }
                };
                AdversarySchedule::expert(model, tree, k, *layout, self.adversary_seed(*seed))
            }
            AdversarySpec::ScheduleFile { path } => {
                let doc: ScheduleDocument = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                if doc.num_states != s_n || doc.num_actions != a_n || doc.horizon != h {
                    return Err(Error::Config("schedule file does not match the instance".into()));
                }
                if doc.episodes < k {
                    return Err(Error::Config(format!(
                        "schedule file covers {} episodes, {k} requested",
                        doc.episodes
                    )));
                }
                AdversarySchedule::from_document(doc)
            }
        }
    }

    pub fn resolve(&self, model: &LinearMixtureModel) -> Result<ResolvedParams> {
        ResolvedParams::new(model, self.episodes, &self.overrides)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "instance": {"kind": "tree", "num_actions": 2, "depth": 2},
        "adversary": {"kind": "zero"},
        "episodes": 4,
        "algorithm": "hf-o2ps"
    }"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        assert_eq!(c.algorithm, Algorithm::HfO2ps);
        assert_eq!(c.seed, 0);
        assert!(!c.record_wall_time);
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = BASE.replace("\"episodes\"", "\"bogus\": 1, \"episodes\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = BASE.replace("\"depth\": 2", "\"depth\": 2, \"width\": 3");
        assert!(ExperimentConfig::from_json(&bad).is_err());
        let bad = BASE.replace("\"algorithm\"", "\"overrides\": {\"eta\": 1}, \"algorithm\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_nonpositive_overrides() {
        let bad = BASE.replace("\"algorithm\"", "\"overrides\": {\"alpha\": -1}, \"algorithm\"");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn default_parameters() {
        let c = ExperimentConfig::from_json(BASE).unwrap();
        let m = c.build_model().unwrap();
        let p = c.resolve(&m).unwrap();
        assert_eq!(p.alpha, 1.0);
        assert_eq!(p.vtr.levels, 5);
        assert_eq!(p.vtr.lambda, 1.0);
        assert_eq!(p.vtr.gamma, 1.0);
        assert!((p.vtr.xi - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in [
            Algorithm::HfO2ps,
            Algorithm::OmdKnownTransition,
            Algorithm::UniformPolicy,
            Algorithm::GreedyNoBonus,
        ] {
            let s = serde_json::to_string(&a).unwrap();
            assert_eq!(s, format!("\"{}\"", a.name()));
            assert_eq!(serde_json::from_str::<Algorithm>(&s).unwrap(), a);
        }
    }
}
