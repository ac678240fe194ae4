use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, ResolvedParams};
use super::regret::{comparator_values, compute_regret};
use crate::error::{Error, Result};
use crate::instances::AdversarySchedule;
use crate::linalg::SpdFactor;
use crate::mdp::{
    best_hindsight_policy, occupancy_of_policy, policy_values, sample_path, LinearMixtureModel,
    OccupancyMeasure, RewardFunction, StochasticPolicy, Trajectory, ValueTable,
};
use crate::omd::{extract_policy, initial_occupancy, omd_update};
use crate::projection::{build_feasible_set, ConfidenceSet, DykstraReport, FeasibleSet};
use crate::vtr::{
    confidence_contains, confidence_radius, home_variances, moment_targets, optimistic_backup,
    MomentBank, RadiusFn, RadiusParams,
};

/// Slack of the occupancy-value versus optimistic-value check.
pub const VALUE_ORDER_TOL: f64 = 1e-6;

/// Decision of the learner for one episode.
#[derive(Debug, Clone)]
pub struct Plan {
    pub occupancy: OccupancyMeasure,
    pub policy: StochasticPolicy,
    /// `(h, s)` rows without occupancy mass (uniform in `policy`).
    pub flagged_states: Vec<(usize, usize)>,
    pub radius: f64,
    pub confidence: Option<ConfidenceSet>,
    pub projection: Option<DykstraReport>,
}

/// Per-step regression diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub state: usize,
    pub action: usize,
    /// Regression weights `sigma_bar^2` for every moment level.
    pub sigma_sq: Vec<f64>,
    /// `||phi_m||_{Sigma~_m^{-1}}` before this step's update.
    pub running_norm: Vec<f64>,
    /// Determinant-ratio indicator before this step's update.
    pub indicator: bool,
    /// `indicator * min(1, radius ||phi_V||_{Sigma^{-1}})`.
    pub bonus: f64,
}

/// What the learner computed after the reward was revealed.
#[derive(Debug, Clone)]
pub struct Feedback {
    /// Optimistic values of the executed policy (true values for the
    /// baselines that do not estimate the kernel).
    pub values: ValueTable,
    pub steps: Vec<StepDiagnostics>,
}

/// Stateful learner. Each episode calls [`Learner::plan`] and then
/// [`Learner::observe`] with the executed trajectory and revealed reward.
#[derive(Debug)]
pub struct Learner<'a> {
    model: &'a LinearMixtureModel,
    algorithm: Algorithm,
    params: ResolvedParams,
    radius_fn: RadiusFn,
    bank: Option<MomentBank>,
    known: Option<FeasibleSet>,
    occupancy: OccupancyMeasure,
    last_reward: RewardFunction,
    last_plan: Option<(StochasticPolicy, f64)>,
    episode: usize,
}

impl<'a> Learner<'a> {
    pub fn new(model: &'a LinearMixtureModel, algorithm: Algorithm, params: ResolvedParams) -> Result<Self> {
        Self::with_radius(model, algorithm, params, confidence_radius)
    }

    /// Learner with a custom confidence-radius rule.
    pub fn with_radius(
        model: &'a LinearMixtureModel,
        algorithm: Algorithm,
        params: ResolvedParams,
        radius_fn: RadiusFn,
    ) -> Result<Self> {
        let layout = model.layout().clone();
        let bank = match algorithm {
            Algorithm::HfO2ps | Algorithm::GreedyNoBonus => Some(MomentBank::new(model.dim(), params.vtr)?),
            _ => None,
        };
        let known = match algorithm {
            Algorithm::OmdKnownTransition => Some(build_feasible_set(
                &ConfidenceSet::point(model.theta_star().clone()),
                model,
            )?),
            _ => None,
        };
        let occupancy = match algorithm {
            Algorithm::UniformPolicy => OccupancyMeasure::uniform(layout),
            _ => initial_occupancy(&FeasibleSet::affine(layout)?, &params.dykstra)?.0,
        };
        Ok(Self {
            model,
            algorithm,
            params,
            radius_fn,
            bank,
            known,
            occupancy,
            last_reward: RewardFunction::zeros(model.num_states(), model.num_actions()),
            last_plan: None,
            episode: 0,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.algorithm
    }
    pub fn params(&self) -> &ResolvedParams {
        &self.params
    }
    pub fn bank(&self) -> Option<&MomentBank> {
        self.bank.as_ref()
    }
    /// Episodes completed so far.
    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Confidence radius for the upcoming episode.
    pub fn radius(&self) -> Result<f64> {
        match self.algorithm {
            Algorithm::HfO2ps => match self.params.radius {
                Some(r) => Ok(r),
                None => {
                    let p = RadiusParams::from_vtr(&self.params.vtr, self.model.dim(), self.model.horizon());
                    (self.radius_fn)(self.episode + 1, &p)
                }
            },
            _ => Ok(0.0),
        }
    }

    /// Feasible set of the upcoming episode (`None` for the uniform baseline).
    pub fn feasible_set(&self) -> Result<Option<(FeasibleSet, f64)>> {
        let radius = self.radius()?;
        Ok(match self.algorithm {
            Algorithm::UniformPolicy => None,
            Algorithm::OmdKnownTransition => self.known.clone().map(|s| (s, radius)),
            Algorithm::HfO2ps | Algorithm::GreedyNoBonus => {
                let bank = self.bank.as_ref().expect("estimating learner has a bank");
                Some((build_feasible_set(&bank.confidence_set(radius), self.model)?, radius))
            }
        })
    }

    /// Occupancy measure and policy for the upcoming episode.
    pub fn plan(&mut self) -> Result<Plan> {
        if self.last_plan.is_some() {
            return Err(Error::Schedule("previous plan has not been observed".into()));
        }
        let plan = match self.algorithm {
            Algorithm::UniformPolicy => {
                let m = self.model;
                let policy = StochasticPolicy::uniform(m.horizon(), m.num_states(), m.num_actions());
                Plan {
                    occupancy: occupancy_of_policy(m, &policy)?,
                    policy,
                    flagged_states: Vec::new(),
                    radius: 0.0,
                    confidence: None,
                    projection: None,
                }
            }
            _ => {
                let built;
                let (set, radius) = match &self.known {
                    Some(set) => (set, 0.0),
                    None => {
                        built = self.feasible_set()?.expect("mirror-descent learner has a set");
                        (&built.0, built.1)
                    }
                };
                let step = omd_update(
                    &self.occupancy,
                    &self.last_reward,
                    self.params.alpha,
                    set,
                    &self.params.dykstra,
                )?;
                let (policy, flagged_states) = extract_policy(&step.occupancy);
                Plan {
                    occupancy: step.occupancy,
                    policy,
                    flagged_states,
                    radius,
                    confidence: set.confidence().cloned(),
                    projection: Some(step.report),
                }
            }
        };
        self.occupancy = plan.occupancy.clone();
        self.last_plan = Some((plan.policy.clone(), plan.radius));
        Ok(plan)
    }

    /// Consumes the executed trajectory and the reward revealed after it.
    pub fn observe(&mut self, trajectory: &Trajectory, reward: &RewardFunction) -> Result<Feedback> {
        let (policy, radius) = self
            .last_plan
            .take()
            .ok_or_else(|| Error::Schedule("observe called before plan".into()))?;
        let m = self.model;
        if trajectory.actions.len() != m.horizon() || trajectory.states.len() != m.horizon() + 1 {
            return Err(Error::ShapeMismatch("trajectory length does not match the horizon".into()));
        }
        let feedback = match self.algorithm {
            Algorithm::UniformPolicy => Feedback {
                values: policy_values(m, reward, &policy)?,
                steps: Vec::new(),
            },
            Algorithm::OmdKnownTransition => {
                let d = m.dim();
                let gram = SpdFactor::new(&DMatrix::identity(d, d))?;
                Feedback {
                    values: optimistic_backup(m, reward, &policy, m.theta_star(), &gram, 0.0)?,
                    steps: Vec::new(),
                }
            }
            Algorithm::HfO2ps | Algorithm::GreedyNoBonus => {
                let bank = self.bank.as_mut().expect("estimating learner has a bank");
                regression_pass(m, bank, &policy, trajectory, reward, radius)?
            }
        };
        self.last_reward = reward.clone();
        self.episode += 1;
        Ok(feedback)
    }
}

/// Optimistic backup followed by the per-step variance estimates and
/// weighted regression updates of every moment level.
fn regression_pass(
    model: &LinearMixtureModel,
    bank: &mut MomentBank,
    policy: &StochasticPolicy,
    trajectory: &Trajectory,
    reward: &RewardFunction,
    radius: f64,
) -> Result<Feedback> {
    let theta = bank.estimate(0).clone();
    let gram = bank.episode_factor(0).clone();
    let values = optimistic_backup(model, reward, policy, &theta, &gram, radius)?;
    let (xi, gamma, levels) = (bank.params().xi, bank.params().gamma, bank.num_levels());
    let mut steps = Vec::with_capacity(model.horizon());
    for h in 0..model.horizon() {
        let (s, a, next) = (trajectory.states[h], trajectory.actions[h], trajectory.states[h + 1]);
        let targets = moment_targets(values.v_stage(h + 1), levels);
        let phis: Vec<DVector<f64>> = targets.iter().map(|t| model.phi_v(s, a, t)).collect();
        let indicator = bank.det_ratio_indicator()?;
        let bonus = if indicator {
            (radius * gram.inv_norm(&phis[0])).min(1.0)
        } else {
            0.0
        };
        let home = home_variances(&phis, bank, radius, xi, gamma)?;
        for (lvl, phi) in phis.iter().enumerate() {
            bank.update(lvl, phi, targets[lvl][next], home.sigma_sq[lvl])?;
        }
        steps.push(StepDiagnostics {
            state: s,
            action: a,
            sigma_sq: home.sigma_sq,
            running_norm: home.running_norm,
            indicator,
            bonus,
        });
    }
    bank.finish_episode()?;
    Ok(Feedback { values, steps })
}

/// One row of the per-episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: usize,
    pub realized_return: f64,
    /// `<z^k, r^k>`.
    pub occupancy_value: f64,
    /// Optimistic `V_{k,1}(s_1)`.
    pub optimistic_value: f64,
    /// Exact value of the executed policy under the true kernel.
    pub policy_value: f64,
    /// Exact value of the best fixed policy in hindsight on this reward.
    pub comparator_value: f64,
    /// Best fixed policy on rewards `1..=k`, total value (diagnostic).
    pub prefix_comparator: Option<f64>,
    pub cumulative_regret: f64,
    pub radius: f64,
    /// Whether the true parameter is inside this episode's confidence set.
    pub contained: bool,
    pub containment_margin: f64,
    /// Determinant-ratio indicator at the last step.
    pub indicator: bool,
    /// Episode contribution to the bonus sum.
    pub bonus_increment: f64,
    pub sweeps: usize,
    pub projection_residual: f64,
    pub projection_converged: bool,
    pub home_steps: usize,
    /// Steps whose level-0 weight dominates the exact conditional variance.
    pub home_dominated: usize,
    pub wall_time_ms: Option<f64>,
}

impl EpisodeRecord {
    /// CSV column order.
    pub const COLUMNS: [&'static str; 19] = [
        "episode",
        "realized_return",
        "occupancy_value",
        "optimistic_value",
        "policy_value",
        "comparator_value",
        "prefix_comparator",
        "cumulative_regret",
        "radius",
        "contained",
        "containment_margin",
        "indicator",
        "bonus_increment",
        "sweeps",
        "projection_residual",
        "projection_converged",
        "home_steps",
        "home_dominated",
        "wall_time_ms",
    ];

    pub fn regret(&self) -> f64 {
        self.comparator_value - self.policy_value
    }
}

/// Aggregates of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub algorithm: Algorithm,
    pub episodes: usize,
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub dim: usize,
    pub seed: u64,
    pub alpha: f64,
    pub xi: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub levels: usize,
    pub delta: f64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub final_regret: f64,
    /// `sum_k (V*_k - <z^k, r^k>)`.
    pub occupancy_regret: f64,
    pub comparator_total: f64,
    pub learner_total: f64,
    pub realized_total: f64,
    pub contained_episodes: usize,
    pub value_order_violations: usize,
    pub home_steps: usize,
    pub home_dominated: usize,
    pub bonus_sum: f64,
    pub total_sweeps: usize,
    pub max_projection_residual: f64,
    pub unconverged_projections: usize,
}

/// Records, summary and the revealed reward sequence of one run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<EpisodeRecord>,
    pub summary: RunSummary,
    pub rewards: Vec<RewardFunction>,
    pub comparator: StochasticPolicy,
}

/// Switches of [`run_with`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub record_wall_time: bool,
    pub prefix_comparator: bool,
}

/// Trajectory sampler of a run.
pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 << 62);
    rng
}

/// Runs the configured experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let model = config.build_model()?;
    let schedule = config.build_schedule(&model)?;
    let params = config.resolve(&model)?;
    let opts = RunOptions {
        record_wall_time: config.record_wall_time,
        prefix_comparator: config.prefix_comparator,
    };
    run_with(&model, schedule, config.algorithm, params, config.seed, opts)
}

/// Plays `schedule` against a learner on `model`.
pub fn run_with(
    model: &LinearMixtureModel,
    mut schedule: AdversarySchedule,
    algorithm: Algorithm,
    params: ResolvedParams,
    seed: u64,
    opts: RunOptions,
) -> Result<RunOutput> {
    let learner = Learner::new(model, algorithm, params)?;
    drive(model, &mut schedule, learner, seed, opts)
}

/// Plays `schedule` against a prepared learner.
pub fn drive(
    model: &LinearMixtureModel,
    schedule: &mut AdversarySchedule,
    mut learner: Learner<'_>,
    seed: u64,
    opts: RunOptions,
) -> Result<RunOutput> {
    let k_n = schedule.episodes();
    let s1 = model.initial_state();
    let params = *learner.params();
    let mut rng = trajectory_rng(seed);
    let mut records = Vec::with_capacity(k_n);
    let mut rewards = Vec::with_capacity(k_n);
    let mut prefix = RewardFunction::zeros(model.num_states(), model.num_actions());
    for k in 0..k_n {
        let wrap = |e: Error| Error::Episode {
            episode: k + 1,
            source: Box::new(e),
        };
        let start = Instant::now();
        let plan = learner.plan().map_err(wrap)?;
        let trajectory = sample_path(model, &plan.policy, &mut rng);
        schedule.commit_trajectory(k).map_err(wrap)?;
        let reward = schedule.reveal(k).map_err(wrap)?;
        let feedback = learner.observe(&trajectory, &reward).map_err(wrap)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;

        let (contained, margin) = match &plan.confidence {
            Some(c) => confidence_contains(c, model.theta_star()).map_err(wrap)?,
            None => (true, f64::INFINITY),
        };
        let mut dominated = 0;
        for (h, st) in feedback.steps.iter().enumerate() {
            let v: Vec<f64> = feedback.values.v_stage(h + 1).iter().map(|x| x.clamp(0.0, 1.0)).collect();
            if st.sigma_sq[0] >= model.conditional_variance(st.state, st.action, &v) {
                dominated += 1;
            }
        }
        let prefix_value = if opts.prefix_comparator {
            prefix.accumulate(&reward);
            Some(best_hindsight_policy(model, std::slice::from_ref(&prefix)).map_err(wrap)?.1)
        } else {
            None
        };
        let report = plan.projection.as_ref();
        records.push(EpisodeRecord {
            episode: k + 1,
            realized_return: trajectory.realized_return(&reward),
            occupancy_value: plan.occupancy.value(&reward),
            optimistic_value: feedback.values.v(0, s1),
            policy_value: policy_values(model, &reward, &plan.policy).map_err(wrap)?.v(0, s1),
            comparator_value: 0.0,
            prefix_comparator: prefix_value,
            cumulative_regret: 0.0,
            radius: plan.radius,
            contained,
            containment_margin: margin,
            indicator: feedback.steps.last().is_none_or(|s| s.indicator),
            bonus_increment: feedback.steps.iter().map(|s| s.bonus).sum(),
            sweeps: report.map_or(0, |r| r.sweeps),
            projection_residual: report.map_or(0.0, |r| r.residual),
            projection_converged: report.is_none_or(|r| r.converged),
            home_steps: feedback.steps.len(),
            home_dominated: dominated,
            wall_time_ms: opts.record_wall_time.then_some(elapsed),
        });
        rewards.push(reward);
    }
    let (comparator, comparator_total) = best_hindsight_policy(model, &rewards)?;
    for (rec, v) in records.iter_mut().zip(comparator_values(model, &rewards, &comparator)?) {
        rec.comparator_value = v;
    }
    let cumulative = compute_regret(&records);
    for (rec, c) in records.iter_mut().zip(cumulative) {
        rec.cumulative_regret = c;
    }
    let summary = summarize(model, learner.algorithm(), &params, seed, &records, comparator_total);
    Ok(RunOutput {
        records,
        summary,
        rewards,
        comparator,
    })
}

fn summarize(
    model: &LinearMixtureModel,
    algorithm: Algorithm,
    params: &ResolvedParams,
    seed: u64,
    records: &[EpisodeRecord],
    comparator_total: f64,
) -> RunSummary {
    let sum = |f: fn(&EpisodeRecord) -> f64| records.iter().map(f).sum::<f64>();
    RunSummary {
        algorithm,
        episodes: records.len(),
        num_states: model.num_states(),
        num_actions: model.num_actions(),
        horizon: model.horizon(),
        dim: model.dim(),
        seed,
        alpha: params.alpha,
        xi: params.vtr.xi,
        gamma: params.vtr.gamma,
        lambda: params.vtr.lambda,
        levels: params.vtr.levels,
        delta: params.vtr.delta,
        tol: params.dykstra.tol,
        max_sweeps: params.dykstra.max_sweeps,
        final_regret: records.last().map_or(0.0, |r| r.cumulative_regret),
        occupancy_regret: sum(|r| r.comparator_value - r.occupancy_value),
        comparator_total,
        learner_total: sum(|r| r.policy_value),
        realized_total: sum(|r| r.realized_return),
        contained_episodes: records.iter().filter(|r| r.contained).count(),
        value_order_violations: records
            .iter()
            .filter(|r| r.contained && r.occupancy_value > r.optimistic_value + VALUE_ORDER_TOL)
            .count(),
        home_steps: records.iter().map(|r| r.home_steps).sum(),
        home_dominated: records.iter().map(|r| r.home_dominated).sum(),
        bonus_sum: sum(|r| r.bonus_increment),
        total_sweeps: records.iter().map(|r| r.sweeps).sum(),
        max_projection_residual: records
            .iter()
            .map(|r| r.projection_residual)
            .fold(0.0, f64::max),
        unconverged_projections: records.iter().filter(|r| !r.projection_converged).count(),
    }
}
