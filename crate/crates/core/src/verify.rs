//! Invariant suite: randomized checks of the properties every module must
//! satisfy, each reported as a pass/fail line.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::Result;
use crate::harness::{
    log_log_slope, read_records_csv, run_experiment, run_with, trajectory_rng, write_records_csv,
    Algorithm, ExperimentConfig, Learner, ResolvedParams, RunOptions, VALUE_ORDER_TOL,
};
use crate::instances::{
    make_basis_mixture, make_tree_mdp, random_reward, AdversarySchedule, ExpertLayout, TreeShape,
};
use crate::mdp::{
    best_hindsight_policy, occupancy_of_policy, occupancy_to_policy_and_transition, optimal_values,
    policy_values, sample_index, sample_path, LinearMixtureModel, OccupancyMeasure, RewardFunction,
    StochasticPolicy,
};
use crate::omd::bregman_divergence;
use crate::projection::{
    build_feasible_set, kl_divergence, ConfidenceSet, ConstraintPiece, DykstraConfig,
    DykstraState, EllipsoidSolver, FeasibleSet, InnerConfig, MirrorMap,
};
use crate::vtr::{confidence_radius, moment_targets, RadiusParams};

/// Result of one invariant check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.module,
            self.name,
            self.detail
        )
    }
}

type CheckFn = fn(u64) -> Result<(bool, String)>;

const CHECKS: &[(&str, &str, CheckFn)] = &[
    ("mdp-core", "occupancy round trip", check_round_trip),
    ("mdp-core", "occupancy value equals policy value", check_occupancy_value),
    ("mdp-core", "conditional variance", check_conditional_variance),
    ("mdp-core", "policy values in [0, 1]", check_policy_value_range),
    ("mdp-core", "hindsight policy beats random policies", check_hindsight),
    ("instances", "schedules respect the reward range", check_schedule_range),
    ("instances", "generated models are valid", check_generated_models),
    ("instances", "tree values match path enumeration", check_tree_paths),
    ("vtr-estimator", "optimistic values truncated", check_truncation),
    ("vtr-estimator", "regression weight floors", check_weight_floors),
    ("vtr-estimator", "regression weights dominate variance", check_weight_domination),
    ("vtr-estimator", "optimism under containment", check_optimism),
    ("vtr-estimator", "moment bank invariants", check_bank),
    ("vtr-estimator", "bonus sum sublinear", check_bonus_sum),
    ("occupancy-omd", "membership after every update", check_membership),
    ("occupancy-omd", "feasible set convexity", check_convexity),
    ("occupancy-omd", "strong convexity of the potential", check_pinsker),
    ("occupancy-omd", "generalized pythagorean inequality", check_pythagorean),
    ("occupancy-omd", "known-transition regret bound", check_known_transition_bound),
    ("bregman-projection", "idempotence", check_idempotence),
    ("bregman-projection", "sub-projection feasibility", check_piece_feasibility),
    ("bregman-projection", "dykstra divergence monotone", check_dykstra_monotone),
    ("bregman-projection", "frank-wolfe agrees with multiplier solver", check_frank_wolfe),
    ("harness-cli", "value ordering under containment", check_value_order),
    ("harness-cli", "deterministic output", check_determinism),
    ("harness-cli", "regret telescoping", check_telescoping),
];

/// Runs every check with the given base seed.
pub fn run_invariant_suite(seed: u64) -> Vec<CheckOutcome> {
    CHECKS
        .iter()
        .map(|&(module, name, f)| {
            let (passed, detail) = match f(seed) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckOutcome {
                module,
                name,
                passed,
                detail,
            }
        })
        .collect()
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Policy with Dirichlet(1) rows.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, h_n: usize, s_n: usize, a_n: usize) -> StochasticPolicy {
    let mut probs = Vec::with_capacity(h_n * s_n * a_n);
    for _ in 0..h_n * s_n {
        let row: Vec<f64> = (0..a_n).map(|_| Exp1.sample(rng)).collect();
        let t: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x: &f64| x / t));
    }
    StochasticPolicy::new(h_n, s_n, a_n, probs).expect("normalized rows")
}

fn small_model(seed: u64) -> Result<LinearMixtureModel> {
    make_basis_mixture(4, 2, 4, 3, 2.0, seed)
}

fn tol_ok(err: f64, tol: f64) -> bool {
    err.is_finite() && err <= tol
}

fn check_round_trip(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for i in 0..5 {
        let m = small_model(seed + i)?;
        let pi = random_policy(&mut rng(seed + i, 1), m.horizon(), m.num_states(), m.num_actions());
        let z = occupancy_of_policy(&m, &pi)?;
        let induced = occupancy_to_policy_and_transition(&z);
        let l = m.layout();
        for h in 0..m.horizon() {
            for s in 0..m.num_states() {
                if z.state_mass(h, s) <= 1e-12 {
                    continue;
                }
                for a in 0..m.num_actions() {
                    worst = worst.max((induced.policy.prob(h, s, a) - pi.prob(h, s, a)).abs());
                    if z.state_action_mass(h, s, a) <= 1e-12 {
                        continue;
                    }
                    for j in l.block(h, s, a) {
                        let sp = l.next_state(j);
                        worst = worst.max((induced.transition[j] - m.transition_prob(s, a, sp)).abs());
                    }
                }
            }
        }
    }
    Ok((tol_ok(worst, 1e-10), format!("max deviation {worst:.2e} (tol 1e-10)")))
}

fn check_occupancy_value(seed: u64) -> Result<(bool, String)> {
    let mut worst = 0.0f64;
    for i in 0..5 {
        let m = small_model(seed + i)?;
        let mut r = rng(seed + i, 2);
        for j in 0..4 {
            let pi = random_policy(&mut r, m.horizon(), m.num_states(), m.num_actions());
            let rew = random_reward(m.num_states(), m.num_actions(), m.horizon(), seed + 31 * i + j)?;
            let z = occupancy_of_policy(&m, &pi)?;
            let v = policy_values(&m, &rew, &pi)?.v(0, m.initial_state());
            worst = worst.max((z.value(&rew) - v).abs());
        }
    }
    Ok((tol_ok(worst, 1e-10), format!("max |<z, r> - V| = {worst:.2e} (tol 1e-10)")))
}

fn check_conditional_variance(seed: u64) -> Result<(bool, String)> {
    const N: usize = 100_000;
    let m = small_model(seed)?;
    let mut r = rng(seed, 3);
    let mut worst_z = 0.0f64;
    let mut negative = 0;
    for s in 0..m.num_states() {
        for a in 0..m.num_actions() {
            let v: Vec<f64> = (0..m.num_states()).map(|_| r.random::<f64>()).collect();
            let var = m.conditional_variance(s, a, &v);
            if var < 0.0 {
                negative += 1;
            }
            let row = m.kernel_row(s, a);
            let mean: f64 = row.iter().zip(&v).map(|(p, x)| p * x).sum();
            let mu4: f64 = row.iter().zip(&v).map(|(p, x)| p * (x - mean).powi(4)).sum();
            let se = ((mu4 - var * var).max(0.0) / N as f64).sqrt();
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..N {
                let x = v[sample_index(&mut r, row.iter().copied())];
                s1 += x;
                s2 += x * x;
            }
            let mc = s2 / N as f64 - (s1 / N as f64).powi(2);
            if se > 0.0 {
                worst_z = worst_z.max((mc - var).abs() / se);
            }
        }
    }
    Ok((
        negative == 0 && worst_z <= 4.0,
        format!("{negative} negative, worst Monte-Carlo deviation {worst_z:.2} sigma (limit 4)"),
    ))
}

fn check_policy_value_range(seed: u64) -> Result<(bool, String)> {
    let mut out = 0;
    for i in 0..5 {
        let m = small_model(seed + i)?;
        let pi = random_policy(&mut rng(seed + i, 4), m.horizon(), m.num_states(), m.num_actions());
        let rew = random_reward(m.num_states(), m.num_actions(), m.horizon(), seed + i)?;
        let t = policy_values(&m, &rew, &pi)?;
        for h in 0..=m.horizon() {
            for s in 0..m.num_states() {
                if !(-1e-12..=1.0 + 1e-12).contains(&t.v(h, s)) {
                    out += 1;
                }
            }
        }
    }
    Ok((out == 0, format!("{out} values outside [0, 1]")))
}

fn check_hindsight(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let rewards: Vec<RewardFunction> = (0..5)
        .map(|k| random_reward(m.num_states(), m.num_actions(), m.horizon(), seed * 7 + k))
        .collect::<Result<_>>()?;
    let (_, best) = best_hindsight_policy(&m, &rewards)?;
    let mut r = rng(seed, 5);
    let mut beaten = 0;
    let mut top = f64::NEG_INFINITY;
    for _ in 0..1000 {
        let pi = random_policy(&mut r, m.horizon(), m.num_states(), m.num_actions());
        let mut total = 0.0;
        for rew in &rewards {
            total += policy_values(&m, rew, &pi)?.v(0, m.initial_state());
        }
        top = top.max(total);
        if total > best + 1e-12 {
            beaten += 1;
        }
    }
    Ok((
        beaten == 0,
        format!("hindsight total {best:.6}, best random policy {top:.6}, {beaten} exceed it"),
    ))
}

fn check_schedule_range(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let tree_model = make_tree_mdp(2, 4)?;
    let tree = TreeShape::new(2, 4)?;
    let k = 50;
    let rew = random_reward(m.num_states(), m.num_actions(), m.horizon(), seed)?;
    let schedules = vec![
        (AdversarySchedule::fixed_random(&m, k, seed)?, m.horizon()),
        (AdversarySchedule::degenerate_fixed(&m, k, &rew)?, m.horizon()),
        (AdversarySchedule::oblivious(&m, k, seed)?, m.horizon()),
        (
            AdversarySchedule::expert(&tree_model, tree, k, ExpertLayout::LastLayer, seed)?,
            4,
        ),
        (
            AdversarySchedule::expert(&tree_model, tree, k, ExpertLayout::TwoStage, seed)?,
            4,
        ),
    ];
    let mut bad = 0;
    for (mut s, h) in schedules {
        let cap = 1.0 / h as f64;
        for i in 0..k {
            s.commit_trajectory(i)?;
            bad += s
                .reveal(i)?
                .as_slice()
                .iter()
                .filter(|&&x| !(0.0..=cap).contains(&x))
                .count();
        }
    }
    Ok((bad == 0, format!("{bad} entries outside [0, 1/H] over 5 schedules")))
}

fn check_generated_models(seed: u64) -> Result<(bool, String)> {
    let mut ok = 0;
    let mut first_failure = String::new();
    for i in 0..200 {
        let res = make_basis_mixture(5, 3, 4, 4, 2.0, seed + i).map(|m| {
            let mut r = rng(seed + i, 6);
            let mut worst_sum = 0.0f64;
            let mut worst_norm = 0.0f64;
            let mut vs: Vec<Vec<f64>> = vec![vec![1.0; 5], vec![0.0; 5]];
            vs.extend((0..5).map(|j| (0..5).map(|x| if x == j { 1.0 } else { 0.0 }).collect()));
            vs.extend((0..100).map(|_| (0..5).map(|_| r.random::<f64>()).collect()));
            for s in 0..5 {
                for a in 0..3 {
                    let mut total = 0.0;
                    for sp in 0..5 {
                        let p: f64 = m.phi(sp, s, a).iter().zip(m.theta_star().iter()).map(|(x, t)| x * t).sum();
                        if p < 0.0 {
                            worst_sum = f64::INFINITY;
                        }
                        total += p;
                    }
                    worst_sum = worst_sum.max((total - 1.0).abs());
                    for v in &vs {
                        worst_norm = worst_norm.max(m.phi_v(s, a, v).norm());
                    }
                }
            }
            worst_sum <= 1e-12 && worst_norm <= 1.0 + 1e-12 && m.theta_star().norm() <= m.norm_bound()
        });
        match res {
            Ok(true) => ok += 1,
            Ok(false) if first_failure.is_empty() => first_failure = format!("seed {}", seed + i),
            Err(e) if first_failure.is_empty() => first_failure = format!("seed {}: {e}", seed + i),
            _ => {}
        }
    }
    Ok((ok == 200, format!("{ok}/200 models valid {first_failure}")))
}

fn check_tree_paths(seed: u64) -> Result<(bool, String)> {
    let (a_n, depth) = (3, 5);
    let m = make_tree_mdp(a_n, depth)?;
    let rew = random_reward(m.num_states(), a_n, depth, seed)?;
    let (opt, _) = optimal_values(&m, &rew)?;
    let uniform = StochasticPolicy::uniform(depth, m.num_states(), a_n);
    let unif = policy_values(&m, &rew, &uniform)?;
    let tree = TreeShape::new(a_n, depth)?;
    let paths = a_n.pow(depth as u32);
    let (mut best, mut mean) = (f64::NEG_INFINITY, 0.0);
    for p in 0..paths {
        let (mut pos, mut total, mut code) = (0, 0.0, p);
        for layer in 0..depth {
            let a = code % a_n;
            code /= a_n;
            total += rew.get(tree.state(layer, pos), a);
            pos = pos * a_n + a;
        }
        best = best.max(total);
        mean += total / paths as f64;
    }
    let s1 = m.initial_state();
    let err = (opt.v(0, s1) - best).abs().max((unif.v(0, s1) - mean).abs());
    Ok((tol_ok(err, 1e-12), format!("{paths} paths, max deviation {err:.2e}")))
}

/// Small learning run that records per-episode state for the estimator checks.
struct TracedEpisode {
    contained: bool,
    radius: f64,
    values_ok: bool,
    optimism_gap: f64,
    q_optimism_gap: f64,
    floors_ok: bool,
    dominated: usize,
    steps: usize,
    occupancy_value: f64,
    optimistic_value: f64,
    membership: f64,
    /// Some confidence piece had no strictly positive feasible point.
    degenerate: bool,
}

fn traced_run(seed: u64, episodes: usize, radius: Option<f64>) -> Result<Vec<TracedEpisode>> {
    let m = small_model(seed)?;
    let mut params = ResolvedParams::new(&m, episodes, &Default::default())?;
    params.radius = radius;
    let mut learner = Learner::new(&m, Algorithm::HfO2ps, params)?;
    let mut schedule = AdversarySchedule::oblivious(&m, episodes, seed + 1)?;
    let mut r = trajectory_rng(seed);
    let s1 = m.initial_state();
    let mut out = Vec::with_capacity(episodes);
    for k in 0..episodes {
        let set = learner.feasible_set()?.expect("estimating learner").0;
        let plan = learner.plan()?;
        let membership = set.membership(&plan.occupancy).max();
        let degenerate = plan
            .projection
            .as_ref()
            .is_some_and(|r| r.clipped_pieces + r.empty_pieces > 0);
        let traj = sample_path(&m, &plan.policy, &mut r);
        schedule.commit_trajectory(k)?;
        let rew = schedule.reveal(k)?;
        let fb = learner.observe(&traj, &rew)?;
        let conf = plan.confidence.as_ref().expect("confidence set");
        let contained = conf.contains(m.theta_star());
        let truth = policy_values(&m, &rew, &plan.policy)?;
        let mut values_ok = true;
        let mut q_gap = f64::INFINITY;
        for h in 0..m.horizon() {
            for s in 0..m.num_states() {
                values_ok &= (0.0..=1.0).contains(&fb.values.v(h, s));
                for a in 0..m.num_actions() {
                    let q = fb.values.q(h, s, a);
                    values_ok &= (0.0..=1.0).contains(&q);
                    q_gap = q_gap.min(q - truth.q(h, s, a));
                }
            }
        }
        let (xi, gamma) = (params.vtr.xi, params.vtr.gamma);
        let mut floors_ok = true;
        let mut dominated = 0;
        let mut steps = 0;
        for (h, st) in fb.steps.iter().enumerate() {
            let targets = moment_targets(fb.values.v_stage(h + 1), params.vtr.levels);
            for (lvl, &w) in st.sigma_sq.iter().enumerate() {
                floors_ok &= w >= xi * xi && w >= gamma * gamma * st.running_norm[lvl];
                steps += 1;
                if w >= m.conditional_variance(st.state, st.action, &targets[lvl]) {
                    dominated += 1;
                }
            }
        }
        out.push(TracedEpisode {
            contained,
            radius: plan.radius,
            values_ok,
            optimism_gap: fb.values.v(0, s1) - truth.v(0, s1),
            q_optimism_gap: q_gap,
            floors_ok,
            dominated,
            steps,
            occupancy_value: plan.occupancy.value(&rew),
            optimistic_value: fb.values.v(0, s1),
            membership,
            degenerate,
        });
    }
    Ok(out)
}

fn check_truncation(seed: u64) -> Result<(bool, String)> {
    let mut bad = 0;
    for radius in [None, Some(0.5)] {
        bad += traced_run(seed, 20, radius)?.iter().filter(|e| !e.values_ok).count();
    }
    Ok((bad == 0, format!("{bad} episodes with values outside [0, 1]")))
}

fn check_weight_floors(seed: u64) -> Result<(bool, String)> {
    let mut bad = 0;
    for radius in [None, Some(0.5)] {
        bad += traced_run(seed, 20, radius)?.iter().filter(|e| !e.floors_ok).count();
    }
    Ok((bad == 0, format!("{bad} episodes with a weight below its floor")))
}

fn check_weight_domination(seed: u64) -> Result<(bool, String)> {
    let (mut dom, mut steps, mut episodes) = (0, 0, 0);
    for radius in [None, Some(0.5)] {
        for e in traced_run(seed, 20, radius)?.iter().filter(|e| e.contained) {
            dom += e.dominated;
            steps += e.steps;
            episodes += 1;
        }
    }
    Ok((
        dom == steps,
        format!("{dom}/{steps} level steps dominated over {episodes} contained episodes"),
    ))
}

fn check_optimism(seed: u64) -> Result<(bool, String)> {
    let (mut worst, mut episodes) = (f64::INFINITY, 0);
    for radius in [None, Some(0.5)] {
        for e in traced_run(seed, 20, radius)?.iter().filter(|e| e.contained) {
            worst = worst.min(e.optimism_gap).min(e.q_optimism_gap);
            episodes += 1;
        }
    }
    Ok((
        !(worst < -1e-12),
        format!("min optimistic minus true value {worst:.2e} over {episodes} contained episodes"),
    ))
}

fn check_bank(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let episodes = 15;
    let params = ResolvedParams::new(&m, episodes, &Default::default())?;
    let lambda = params.vtr.lambda;
    let mut learner = Learner::new(&m, Algorithm::HfO2ps, params)?;
    let mut schedule = AdversarySchedule::oblivious(&m, episodes, seed)?;
    let mut r = trajectory_rng(seed);
    let mut prev: Option<Vec<DMatrix<f64>>> = None;
    let (mut min_eig, mut solve_err, mut loewner) = (f64::INFINITY, 0.0f64, f64::INFINITY);
    let mut radii = Vec::new();
    for k in 0..episodes {
        radii.push(learner.radius()?);
        let plan = learner.plan()?;
        let traj = sample_path(&m, &plan.policy, &mut r);
        schedule.commit_trajectory(k)?;
        learner.observe(&traj, &schedule.reveal(k)?)?;
        let bank = learner.bank().expect("bank");
        let covs: Vec<DMatrix<f64>> = (0..bank.num_levels()).map(|i| bank.level(i).episode_cov.clone()).collect();
        for (i, c) in covs.iter().enumerate() {
            min_eig = min_eig.min(c.clone().symmetric_eigen().eigenvalues.min());
            let l = bank.level(i);
            solve_err = solve_err.max((c * &l.estimate - &l.episode_resp).norm());
            if let Some(p) = &prev {
                loewner = loewner.min((c - &p[i]).symmetric_eigen().eigenvalues.min());
            }
        }
        prev = Some(covs);
    }
    let p = RadiusParams::from_vtr(&params.vtr, m.dim(), m.horizon());
    for k in 1..200 {
        radii.push(confidence_radius(k, &p)?);
    }
    let monotone = radii[..episodes].windows(2).all(|w| w[1] >= w[0])
        && radii[episodes..].windows(2).all(|w| w[1] >= w[0]);
    let ok = min_eig >= lambda - 1e-9 && solve_err <= 1e-8 && loewner >= -1e-9 && monotone;
    Ok((
        ok,
        format!(
            "min eigenvalue {min_eig:.3e} (lambda {lambda}), ridge residual {solve_err:.1e}, \
             min Loewner increment {loewner:.1e}, radius monotone {monotone}"
        ),
    ))
}

fn check_bonus_sum(seed: u64) -> Result<(bool, String)> {
    let c = ExperimentConfig {
        instance: crate::harness::InstanceSpec::BasisMixture {
            num_states: 4,
            num_actions: 2,
            horizon: 4,
            dim: 3,
            norm_bound: 2.0,
            seed: Some(seed),
            concentration: None,
        },
        adversary: crate::harness::AdversarySpec::ObliviousSequence { seed: None },
        episodes: 400,
        algorithm: Algorithm::HfO2ps,
        seed,
        overrides: Default::default(),
        output: None,
        record_wall_time: false,
        prefix_comparator: false,
    };
    let out = run_experiment(&c)?;
    let mut acc = 0.0;
    let cumulative: Vec<f64> = out
        .records
        .iter()
        .map(|r| {
            acc += r.bonus_increment;
            acc
        })
        .collect();
    let pts: Vec<(f64, f64)> = [50usize, 100, 200, 400]
        .iter()
        .map(|&k| (k as f64, cumulative[k - 1]))
        .collect();
    let (slope, _) = log_log_slope(&pts)?;
    Ok((
        slope < 1.0,
        format!(
            "log-log slope of the bonus sum over K = 50..400 is {slope:.4} (need < 1; radius {:.1})",
            out.records.last().map_or(0.0, |r| r.radius)
        ),
    ))
}

fn check_membership(seed: u64) -> Result<(bool, String)> {
    let tol = DykstraConfig::default().residual_tol;
    let (mut worst, mut n, mut skipped) = (0.0f64, 0, 0);
    for radius in [None, Some(0.5)] {
        for e in traced_run(seed, 10, radius)? {
            if e.degenerate {
                skipped += 1;
                continue;
            }
            worst = worst.max(e.membership);
            n += 1;
        }
    }
    Ok((
        n > 0 && worst <= 10.0 * tol,
        format!(
            "max membership residual {worst:.2e} over {n} episodes (limit {:.0e}; {skipped} with an empty slice skipped)",
            10.0 * tol
        ),
    ))
}

/// Confidence set around a perturbation of the true parameter that still
/// contains it.
fn tight_set(m: &LinearMixtureModel, seed: u64, scale: f64) -> Result<(FeasibleSet, ConfidenceSet)> {
    let mut r = rng(seed, 7);
    let d = m.dim();
    let noise = DVector::from_fn(d, |_, _| {
        let x: f64 = StandardNormal.sample(&mut r);
        x
    });
    let center = m.theta_star() + noise.normalize() * 0.05;
    let gram = DMatrix::identity(d, d) * scale;
    let radius = 0.05 * scale.sqrt() * 1.5;
    let conf = ConfidenceSet::new(center, gram, radius)?;
    Ok((build_feasible_set(&conf, m)?, conf))
}

fn random_target<R: Rng + ?Sized>(layout: &std::sync::Arc<crate::mdp::SupportLayout>, r: &mut R) -> OccupancyMeasure {
    let v: Vec<f64> = (0..layout.len()).map(|_| 0.05 + r.random::<f64>()).collect();
    let mut w = OccupancyMeasure::new(layout.clone(), v).expect("layout length");
    w.normalize_stages();
    w
}

fn check_convexity(seed: u64) -> Result<(bool, String)> {
    let tol = DykstraConfig::default().residual_tol;
    let m = small_model(seed)?;
    let (set, _) = tight_set(&m, seed, 50.0)?;
    let mut r = rng(seed, 8);
    let mut members = Vec::new();
    for _ in 0..4 {
        let (z, _) = set.project(&random_target(m.layout(), &mut r), &DykstraConfig::default())?;
        members.push(z);
    }
    for _ in 0..4 {
        let pi = random_policy(&mut r, m.horizon(), m.num_states(), m.num_actions());
        members.push(occupancy_of_policy(&m, &pi)?);
    }
    let mut worst_member = 0.0f64;
    let mut worst_mid = 0.0f64;
    for (i, a) in members.iter().enumerate() {
        worst_member = worst_member.max(set.membership(a).max());
        for b in &members[i + 1..] {
            let mid: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
            let z = OccupancyMeasure::new(m.layout().clone(), mid)?;
            worst_mid = worst_mid.max(set.membership(&z).max());
        }
    }
    let limit = 10.0 * tol;
    Ok((
        worst_member <= limit && worst_mid <= limit,
        format!("members {worst_member:.2e}, midpoints {worst_mid:.2e} (limit {limit:.0e})"),
    ))
}

fn check_pinsker(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let l = m.layout();
    let h = l.horizon() as f64;
    let mut r = rng(seed, 9);
    let mut worst = f64::INFINITY;
    for i in 0..1000 {
        let x = random_target(l, &mut r);
        let mut y = random_target(l, &mut r);
        if i % 3 == 0 {
            // sparse-ish pairs
            y.values_mut().iter_mut().for_each(|v| *v = v.powi(4) + 1e-9);
            y.normalize_stages();
        }
        let d = bregman_divergence(&x, &y)?;
        let l1: f64 = x.values().iter().zip(y.values()).map(|(a, b)| (a - b).abs()).sum();
        worst = worst.min(d - l1 * l1 / (2.0 * h));
    }
    Ok((worst >= -1e-12, format!("min D - ||x - y||_1^2 / 2H = {worst:.3e} over 1000 pairs")))
}

fn check_pythagorean(seed: u64) -> Result<(bool, String)> {
    let tol = DykstraConfig::default().tol;
    let mut worst = f64::INFINITY;
    let mut r = rng(seed, 10);
    for i in 0..3 {
        let m = small_model(seed + i)?;
        let (set, conf) = tight_set(&m, seed + i, 50.0)?;
        debug_assert!(conf.contains(m.theta_star()));
        let w = random_target(m.layout(), &mut r);
        let (z, _) = set.project(&w, &DykstraConfig::default())?;
        let dzw = kl_divergence(z.values(), w.values())?;
        for _ in 0..100 {
            let pi = random_policy(&mut r, m.horizon(), m.num_states(), m.num_actions());
            let u = occupancy_of_policy(&m, &pi)?;
            let lhs = kl_divergence(u.values(), w.values())?;
            let rhs = kl_divergence(u.values(), z.values())? + dzw;
            worst = worst.min(lhs - rhs);
        }
    }
    Ok((
        worst >= -tol,
        format!("min D(u,w) - D(u,z) - D(z,w) = {worst:.3e} over 300 points (tol {tol:.0e})"),
    ))
}

fn check_known_transition_bound(seed: u64) -> Result<(bool, String)> {
    let m = make_tree_mdp(2, 4)?;
    let tree = TreeShape::new(2, 4)?;
    let k = 100;
    let params = ResolvedParams::new(&m, k, &Default::default())?;
    let (s_n, a_n, h) = (m.num_states() as f64, m.num_actions() as f64, m.horizon() as f64);
    let bound = h * (s_n * s_n * a_n).ln() / params.alpha + k as f64 * params.alpha / (2.0 * h);
    let mut worst = f64::NEG_INFINITY;
    for i in 0..3 {
        let schedule = AdversarySchedule::expert(&m, tree, k, ExpertLayout::TwoStage, seed + i)?;
        let out = run_with(&m, schedule, Algorithm::OmdKnownTransition, params, seed + i, RunOptions::default())?;
        worst = worst.max(out.summary.occupancy_regret);
    }
    Ok((worst <= bound, format!("max regret {worst:.3} vs bound {bound:.3}")))
}

fn check_idempotence(seed: u64) -> Result<(bool, String)> {
    let cfg = DykstraConfig::default();
    let m = small_model(seed)?;
    let (set, _) = tight_set(&m, seed, 50.0)?;
    let mut r = rng(seed, 11);
    let mut worst = 0.0f64;
    for _ in 0..3 {
        let (z, _) = set.project(&random_target(m.layout(), &mut r), &cfg)?;
        let (z2, _) = set.project(&z, &cfg)?;
        let tv = 0.5 * z.values().iter().zip(z2.values()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        worst = worst.max(tv);
    }
    Ok((worst <= cfg.tol, format!("max TV movement on reprojection {worst:.2e} (tol {:.0e})", cfg.tol)))
}

fn check_piece_feasibility(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let (set, _) = tight_set(&m, seed, 50.0)?;
    let inner = InnerConfig::default();
    let map = MirrorMap::default();
    let mut r = rng(seed, 12);
    let (mut worst, mut worst_idem) = (0.0f64, 0.0f64);
    for piece in set.pieces() {
        for _ in 0..3 {
            let t: Vec<f64> = piece.coords().iter().map(|_| 0.01 + r.random::<f64>()).collect();
            let mut out = vec![0.0; t.len()];
            let o = piece.project(&t, &mut out, &map, &inner)?;
            if o.clipped || o.empty {
                continue;
            }
            let scale = 1.0 + out.iter().sum::<f64>();
            worst = worst.max(piece.residual_local(&out) / scale);
            let mut again = vec![0.0; t.len()];
            piece.project(&out, &mut again, &map, &inner)?;
            worst_idem = worst_idem.max(out.iter().zip(&again).map(|(a, b)| (a - b).abs()).sum::<f64>() / scale);
        }
    }
    let limit = 1e-9;
    Ok((
        worst <= limit && worst_idem <= limit,
        format!("max piece residual {worst:.2e}, max reprojection move {worst_idem:.2e} (limit {limit:.0e})"),
    ))
}

fn check_dykstra_monotone(seed: u64) -> Result<(bool, String)> {
    let cfg = DykstraConfig::default();
    let m = small_model(seed)?;
    let (set, _) = tight_set(&m, seed, 50.0)?;
    let mut r = rng(seed, 13);
    let w = random_target(m.layout(), &mut r);
    let pi = random_policy(&mut r, m.horizon(), m.num_states(), m.num_actions());
    let u = occupancy_of_policy(&m, &pi)?;
    let map = MirrorMap::default();
    let mut state = DykstraState::new(set.pieces(), w.values())?;
    let mut prev = kl_divergence(u.values(), &state.x)?;
    let mut worst_rise = f64::NEG_INFINITY;
    for _ in 0..60 {
        state.sweep(set.pieces(), &map, &cfg.inner)?;
        let d = kl_divergence(u.values(), &state.x)?;
        worst_rise = worst_rise.max(d - prev);
        prev = d;
    }
    Ok((
        worst_rise <= 10.0 * cfg.tol,
        format!("largest per-sweep increase of D(u, x_n) {worst_rise:.2e} (limit {:.0e})", 10.0 * cfg.tol),
    ))
}

fn check_frank_wolfe(seed: u64) -> Result<(bool, String)> {
    let m = small_model(seed)?;
    let (set, _) = tight_set(&m, seed, 50.0)?;
    let map = MirrorMap::default();
    let newton = InnerConfig::default();
    let fw = InnerConfig {
        ellipsoid: EllipsoidSolver::FrankWolfe,
        tol: 1e-10,
        ..InnerConfig::default()
    };
    let mut r = rng(seed, 14);
    let mut worst = 0.0f64;
    let mut n = 0;
    for piece in set.confidence_pieces() {
        if !matches!(piece, ConstraintPiece::OccupancyEllipsoid(_)) {
            continue;
        }
        let t: Vec<f64> = piece.coords().iter().map(|_| 0.01 + r.random::<f64>()).collect();
        let mut a = vec![0.0; t.len()];
        let mut b = vec![0.0; t.len()];
        piece.project(&t, &mut a, &map, &newton)?;
        piece.project(&t, &mut b, &map, &fw)?;
        worst = worst.max((kl_divergence(&a, &t)? - kl_divergence(&b, &t)?).abs());
        n += 1;
    }
    Ok((worst <= 1e-6, format!("max objective gap {worst:.2e} over {n} pieces (tol 1e-6)")))
}

fn check_value_order(seed: u64) -> Result<(bool, String)> {
    let (mut bad, mut n) = (0, 0);
    for radius in [None, Some(0.5)] {
        for e in traced_run(seed, 20, radius)?.iter().filter(|e| e.contained) {
            n += 1;
            if e.occupancy_value > e.optimistic_value + VALUE_ORDER_TOL {
                bad += 1;
            }
            debug_assert!(e.radius >= 0.0);
        }
    }
    Ok((bad == 0, format!("{bad} violations over {n} contained episodes")))
}

fn small_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        instance: crate::harness::InstanceSpec::BasisMixture {
            num_states: 4,
            num_actions: 2,
            horizon: 4,
            dim: 3,
            norm_bound: 2.0,
            seed: None,
            concentration: None,
        },
        adversary: crate::harness::AdversarySpec::ObliviousSequence { seed: None },
        episodes: 15,
        algorithm: Algorithm::HfO2ps,
        seed,
        overrides: Default::default(),
        output: None,
        record_wall_time: false,
        prefix_comparator: false,
    }
}

fn check_determinism(seed: u64) -> Result<(bool, String)> {
    let c = small_config(seed);
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_records_csv(&mut a, &run_experiment(&c)?.records)?;
    write_records_csv(&mut b, &run_experiment(&c)?.records)?;
    let parsed = read_records_csv(a.as_slice())?;
    let mut again = Vec::new();
    write_records_csv(&mut again, &parsed)?;
    Ok((
        a == b && a == again,
        format!("{} bytes, identical {}, round trip {}", a.len(), a == b, a == again),
    ))
}

fn check_telescoping(seed: u64) -> Result<(bool, String)> {
    let out = run_experiment(&small_config(seed))?;
    let last = out.records.last().map_or(0.0, |r| r.cumulative_regret);
    let direct: f64 = out.records.iter().map(|r| r.regret()).sum();
    let ok = out.summary.final_regret == last && (direct - last).abs() <= 1e-12;
    Ok((
        ok,
        format!("final {} vs last cumulative {last} vs direct sum {direct}", out.summary.final_regret),
    ))
}
