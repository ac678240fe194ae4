//! Acceptance criteria 1-11. Runs every criterion, prints one PASS/FAIL line
//! each, and exits nonzero if any hard criterion fails.
//!
//! `ACCEPTANCE_ONLY=2,5` restricts the run to the listed criteria.

#![allow(clippy::needless_range_loop)]

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hfo2ps::harness::{
    run_experiment, sweep, trajectory_rng, Algorithm, ExperimentConfig, Learner, ResolvedParams,
    SweepAxis,
};
use hfo2ps::instances::{make_basis_mixture, make_tree_mdp, random_reward, AdversarySchedule, ExpertLayout, TreeShape};
use hfo2ps::mdp::{occupancy_of_policy, sample_path, LinearMixtureModel, OccupancyMeasure};
use hfo2ps::omd::{exp_reward_step, omd_update};
use hfo2ps::projection::{
    build_feasible_set, kl_divergence, lin_opt_ellipsoid, project_halfspace_euclid,
    project_hyperplane_euclid, ConfidenceSet, DykstraConfig,
};
use hfo2ps::verify::{random_policy, run_invariant_suite};

struct Verdict {
    passed: bool,
    /// Report-only criteria never fail the run.
    hard: bool,
    detail: String,
}

fn hard(passed: bool, detail: String) -> Verdict {
    Verdict { passed, hard: true, detail }
}

fn config(json: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(json).expect("valid config")
}

fn tree_config(depth: usize, layout: &str, episodes: usize, algorithm: &str, seed: u64) -> ExperimentConfig {
    config(&format!(
        r#"{{"instance": {{"kind": "tree", "num_actions": 2, "depth": {depth}}},
            "adversary": {{"kind": "iid-expert-rademacher", "layout": "{layout}"}},
            "episodes": {episodes}, "algorithm": "{algorithm}", "seed": {seed}}}"#
    ))
}

fn mixture_config(horizon: usize, episodes: usize, seed: u64) -> ExperimentConfig {
    config(&format!(
        r#"{{"instance": {{"kind": "basis-mixture", "num_states": 5, "num_actions": 3,
                          "horizon": {horizon}, "dim": 4, "norm_bound": 2}},
            "adversary": {{"kind": "oblivious-sequence"}},
            "episodes": {episodes}, "algorithm": "hf-o2ps", "seed": {seed},
            "overrides": {{"delta": 0.01}}}}"#
    ))
}

// ---------------------------------------------------------------------------
// 1. Known-transition mirror descent bound on the tree.

fn criterion_1() -> Verdict {
    let mut worst_slack = f64::INFINITY;
    let mut worst_residual = 0.0f64;
    let mut violations = 0;
    for k in [100usize, 500, 2000] {
        for seed in 0..20 {
            let cfg = tree_config(4, "last-layer", k, "omd-known-transition", seed);
            let out = run_experiment(&cfg).expect("run");
            let s = &out.summary;
            let (s_n, a_n, h) = (s.num_states as f64, s.num_actions as f64, s.horizon as f64);
            let bound = h * (s_n * s_n * a_n).ln() / s.alpha + k as f64 * s.alpha / (2.0 * h);
            let slack = bound - s.occupancy_regret;
            worst_slack = worst_slack.min(slack);
            worst_residual = worst_residual.max(s.max_projection_residual);
            if slack < 0.0 {
                violations += 1;
            }
        }
    }
    hard(
        violations == 0 && worst_residual <= 1e-6,
        format!(
            "60 runs, {violations} above the bound, min slack {worst_slack:.3}, max projection residual {worst_residual:.1e}"
        ),
    )
}

// ---------------------------------------------------------------------------
// 2. Leaf-reaching distribution against exponentially weighted experts.

/// Mass of each leaf (indexed by its path code, first action least
/// significant) under a tree occupancy measure.
fn leaf_distribution(z: &OccupancyMeasure, tree: TreeShape, depth: usize) -> Vec<f64> {
    let leaves = 2usize.pow(depth as u32);
    let mut out = vec![0.0; leaves];
    for (code, o) in out.iter_mut().enumerate() {
        let mut pos = 0;
        for layer in 0..depth - 1 {
            pos = tree.child(layer, pos, (code >> layer) & 1);
            pos = tree.locate(pos).1;
        }
        let last = tree.state(depth - 1, pos);
        *o = z.state_action_mass(depth - 1, last, (code >> (depth - 1)) & 1);
    }
    out
}

/// Cumulative reward of every root-to-leaf path, same indexing.
fn path_rewards(cum: &[f64], tree: TreeShape, depth: usize) -> Vec<f64> {
    let a_n = 2;
    (0..2usize.pow(depth as u32))
        .map(|code| {
            let (mut pos, mut total) = (0, 0.0);
            for layer in 0..depth {
                let a = (code >> layer) & 1;
                total += cum[tree.state(layer, pos) * a_n + a];
                pos = pos * a_n + a;
            }
            total
        })
        .collect()
}

fn softmax(x: &[f64], eta: f64) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (eta * (v - m)).exp()).collect();
    let t: f64 = e.iter().sum();
    e.iter().map(|v| v / t).collect()
}

/// Entropic mirror descent over path flows of a binary tree has the closed
/// form: an edge with `j` layers below it carries `G_e = w_e (sum_c G_c^{1/j})^j`
/// and splits its node's mass proportionally to `G^{1/(layers + 1)}`.
fn layered_leaf_distribution(cum: &[f64], alpha: f64, tree: TreeShape, depth: usize) -> Vec<f64> {
    let a_n = 2;
    // log G per (layer, pos, action), computed bottom-up.
    let mut log_g: Vec<Vec<f64>> = vec![Vec::new(); depth];
    for layer in (0..depth).rev() {
        let n = tree.layer_size(layer);
        let below = depth - 1 - layer;
        let u = -((layer + 1) as f64) * 2f64.ln();
        let mut row = vec![0.0; n * a_n];
        for pos in 0..n {
            for a in 0..a_n {
                let log_w = u + alpha * cum[tree.state(layer, pos) * a_n + a];
                row[pos * a_n + a] = if below == 0 {
                    log_w
                } else {
                    let child = pos * a_n + a;
                    let terms: Vec<f64> = (0..a_n).map(|b| log_g[layer + 1][child * a_n + b] / below as f64).collect();
                    log_w + below as f64 * log_sum_exp(&terms)
                };
            }
        }
        log_g[layer] = row;
    }
    (0..2usize.pow(depth as u32))
        .map(|code| {
            let (mut pos, mut p) = (0, 1.0);
            for layer in 0..depth {
                let j = (depth - layer) as f64;
                let terms: Vec<f64> = (0..a_n).map(|b| log_g[layer][pos * a_n + b] / j).collect();
                let a = (code >> layer) & 1;
                p *= (terms[a] - log_sum_exp(&terms)).exp();
                pos = pos * a_n + a;
            }
            p
        })
        .collect()
}

fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Runs known-transition mirror descent on a binary tree and returns the
/// largest TV distance of its leaf distribution to Hedge and to the layered
/// closed form over all episodes.
fn hedge_comparison(depth: usize, episodes: usize, seed: u64) -> (f64, f64) {
    let m = make_tree_mdp(2, depth).expect("tree");
    let tree = TreeShape::new(2, depth).expect("tree");
    let params = ResolvedParams::new(&m, episodes, &Default::default()).expect("params");
    let alpha = params.alpha;
    let mut learner = Learner::new(&m, Algorithm::OmdKnownTransition, params).expect("learner");
    let mut schedule = AdversarySchedule::expert(&m, tree, episodes, ExpertLayout::LastLayer, seed).expect("schedule");
    let mut rng = trajectory_rng(seed);
    let mut cum = vec![0.0; m.num_states() * 2];
    let (mut worst_hedge, mut worst_layered) = (0.0f64, 0.0f64);
    for k in 0..episodes {
        let plan = learner.plan().expect("plan");
        let leaves = leaf_distribution(&plan.occupancy, tree, depth);
        let paths = path_rewards(&cum, tree, depth);
        worst_hedge = worst_hedge.max(tv(&leaves, &softmax(&paths, alpha)));
        worst_layered = worst_layered.max(tv(&leaves, &layered_leaf_distribution(&cum, alpha, tree, depth)));
        let traj = sample_path(&m, &plan.policy, &mut rng);
        schedule.commit_trajectory(k).expect("commit");
        let r = schedule.reveal(k).expect("reveal");
        for (c, v) in cum.iter_mut().zip(r.as_slice()) {
            *c += v;
        }
        learner.observe(&traj, &r).expect("observe");
    }
    (worst_hedge, worst_layered)
}

fn criterion_2() -> Verdict {
    let (mut hedge4, mut layered4, mut hedge1) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..20 {
        let (h, l) = hedge_comparison(4, 500, seed);
        hedge4 = hedge4.max(h);
        layered4 = layered4.max(l);
        hedge1 = hedge1.max(hedge_comparison(1, 500, seed).0);
    }
    println!(
        "    depth-1 tree: max TV to Hedge {hedge1:.2e}; depth-4 tree: max TV to layered closed form {layered4:.2e}"
    );
    hard(
        hedge4 <= 1e-5,
        format!("depth-4 tree, 20 seeds x 500 episodes: max TV to Hedge over leaves {hedge4:.3e} (tol 1e-5)"),
    )
}

// ---------------------------------------------------------------------------
// 3, 4, 7. Coverage, value ordering and variance domination on one batch.

struct Batch {
    covered_seeds: usize,
    contained_episodes: usize,
    order_violations: usize,
    dominated: usize,
    steps: usize,
}

fn coverage_batch() -> Batch {
    let mut b = Batch {
        covered_seeds: 0,
        contained_episodes: 0,
        order_violations: 0,
        dominated: 0,
        steps: 0,
    };
    for seed in 0..50 {
        let out = run_experiment(&mixture_config(10, 200, seed)).expect("run");
        if out.records.iter().all(|r| r.contained) {
            b.covered_seeds += 1;
        }
        for r in out.records.iter().filter(|r| r.contained) {
            b.contained_episodes += 1;
            if r.occupancy_value > r.optimistic_value + 1e-6 {
                b.order_violations += 1;
            }
            b.dominated += r.home_dominated;
            b.steps += r.home_steps;
        }
    }
    b
}

// ---------------------------------------------------------------------------
// 5. Projection against a dense grid search on S = A = H = 2.

/// Minimizes `f` over a box by repeated grid refinement around the best point.
fn grid_min<F: Fn(&[f64]) -> f64>(f: F, bounds: &[(f64, f64)], points: usize, rounds: usize) -> f64 {
    let dims = bounds.len();
    let mut b = bounds.to_vec();
    let mut best = f64::INFINITY;
    let mut x = vec![0.0; dims];
    for _ in 0..rounds {
        let step: Vec<f64> = b.iter().map(|(lo, hi)| (hi - lo) / (points - 1) as f64).collect();
        let mut best_idx = vec![0usize; dims];
        let total = points.pow(dims as u32);
        for flat in 0..total {
            let mut rem = flat;
            let mut idx = vec![0usize; dims];
            for i in 0..dims {
                idx[i] = rem % points;
                rem /= points;
                x[i] = b[i].0 + idx[i] as f64 * step[i];
            }
            let v = f(&x);
            if v < best {
                best = v;
                best_idx = idx;
            }
        }
        for i in 0..dims {
            let c = b[i].0 + best_idx[i] as f64 * step[i];
            b[i] = (
                (c - 2.0 * step[i]).max(bounds[i].0),
                (c + 2.0 * step[i]).min(bounds[i].1),
            );
        }
    }
    best
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Interval of `p(s'=0)` over `{phi^T theta : theta in C, rows sum to one}`
/// for `d = 2`, from the line-ellipse intersection, clipped to `[0, 1]`.
fn slice_interval(m: &LinearMixtureModel, conf: &ConfidenceSet, s: usize, a: usize) -> Option<(f64, f64)> {
    let f0 = DVector::from_column_slice(m.phi(0, s, a));
    let f1 = DVector::from_column_slice(m.phi(1, s, a));
    let sum = &f0 + &f1;
    let base = &sum / sum.norm_squared();
    let dir = DVector::from_vec(vec![-sum[1], sum[0]]);
    let off = &base - &conf.center;
    let g = &conf.gram;
    let qa = dir.dot(&(g * &dir));
    let qb = 2.0 * dir.dot(&(g * &off));
    let qc = off.dot(&(g * &off)) - conf.radius * conf.radius;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let t1 = (-qb - disc.sqrt()) / (2.0 * qa);
    let t2 = (-qb + disc.sqrt()) / (2.0 * qa);
    let q = |t: f64| f0.dot(&(&base + &dir * t));
    let (lo, hi) = (q(t1).min(q(t2)), q(t1).max(q(t2)));
    let (lo, hi) = (lo.max(0.0), hi.min(1.0));
    (lo <= hi).then_some((lo, hi))
}

/// Minimum of `D(z, w)` over the feasible set by grid search.
fn grid_objective(m: &LinearMixtureModel, conf: &ConfidenceSet, w: &OccupancyMeasure) -> Option<f64> {
    let l = m.layout();
    let s1 = m.initial_state();
    let wv = |h: usize, s: usize, a: usize, sp: usize| w.values()[l.find(h, s, a, sp).expect("full support")];
    // sum_s' p log(p / w) for p = (q, 1 - q)
    let block = |h: usize, s: usize, a: usize, q: f64| {
        xlogx(q) + xlogx(1.0 - q) - q * wv(h, s, a, 0).ln() - (1.0 - q) * wv(h, s, a, 1).ln()
    };
    let mut intervals = [[(0.0, 0.0); 2]; 2];
    let mut last = [[(0.0, 0.0); 2]; 2];
    for a in 0..2 {
        intervals[0][a] = slice_interval(m, conf, s1, a)?;
        for s in 0..2 {
            last[s][a] = slice_interval(m, conf, s, a)?;
        }
    }
    // Second stage: mass mu at state s costs mu log mu + mu g_s.
    let mut g = [0.0; 2];
    for (s, gs) in g.iter_mut().enumerate() {
        let fstar: Vec<f64> = (0..2)
            .map(|a| grid_min(|x| block(1, s, a, x[0]), &[last[s][a]], 2001, 4))
            .collect();
        *gs = grid_min(
            |x| xlogx(x[0]) + xlogx(1.0 - x[0]) + x[0] * fstar[0] + (1.0 - x[0]) * fstar[1],
            &[(0.0, 1.0)],
            2001,
            4,
        );
    }
    let first = |x: &[f64]| {
        let (pi, q0, q1) = (x[0], x[1], x[2]);
        let mu0 = pi * q0 + (1.0 - pi) * q1;
        let mu1 = 1.0 - mu0;
        xlogx(pi) + pi * block(0, s1, 0, q0) + xlogx(1.0 - pi) + (1.0 - pi) * block(0, s1, 1, q1)
            + xlogx(mu0)
            + mu0 * g[0]
            + xlogx(mu1)
            + mu1 * g[1]
    };
    let best = grid_min(first, &[(0.0, 1.0), intervals[0][0], intervals[0][1]], 101, 6);
    let h = l.horizon() as f64;
    Some(best - h + w.values().iter().sum::<f64>())
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    let mut episodes = 0;
    let mut attempts = 0;
    while episodes < 10 && attempts < 1000 {
        attempts += 1;
        let m = make_basis_mixture(2, 2, 2, 2, 2.0, rng.random()).expect("model");
        let l = m.layout();
        let full = (0..2).all(|h| {
            (0..2).all(|s| (0..2).all(|a| (0..2).all(|sp| !l.is_reachable(h, s) || l.find(h, s, a, sp).is_some())))
        });
        if !full || !l.is_reachable(1, 0) || !l.is_reachable(1, 1) {
            continue;
        }
        let d = m.dim();
        let noise = DVector::from_fn(d, |_, _| rng.random::<f64>() - 0.5);
        let center = m.theta_star() + noise * 0.3;
        let root = DMatrix::from_fn(d, d, |_, _| rng.random::<f64>() - 0.5);
        let gram = &root * root.transpose() * 20.0 + DMatrix::identity(d, d) * 2.0;
        let radius = 0.5 + 3.0 * rng.random::<f64>();
        let conf = ConfidenceSet::new(center, gram, radius).expect("set");
        let set = build_feasible_set(&conf, &m).expect("set");
        let pi = random_policy(&mut rng, 2, 2, 2);
        let z_prev = occupancy_of_policy(&m, &pi).expect("occupancy");
        let r = random_reward(2, 2, 2, rng.random()).expect("reward");
        let alpha = 3.0;
        let w = exp_reward_step(&z_prev, &r, alpha);
        let Some(oracle) = grid_objective(&m, &conf, &w) else {
            continue;
        };
        let step = omd_update(&z_prev, &r, alpha, &set, &DykstraConfig::default()).expect("update");
        if step.report.empty_pieces > 0 {
            continue;
        }
        let ours = kl_divergence(step.occupancy.values(), w.values()).expect("kl");
        worst = worst.max((ours - oracle).abs());
        episodes += 1;
    }
    hard(
        episodes == 10 && worst <= 1e-3,
        format!("{episodes} episodes, max |D(z, w) - grid optimum| = {worst:.2e} (tol 1e-3)"),
    )
}

// ---------------------------------------------------------------------------
// 6. Closed-form Euclidean projections and the ellipsoid linear oracle.

fn kkt_hyperplane(a: &DMatrix<f64>, b: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut k = DMatrix::zeros(n + m, n + m);
    k.view_mut((0, 0), (n, n)).fill_with_identity();
    k.view_mut((0, n), (n, m)).copy_from(&a.transpose());
    k.view_mut((n, 0), (m, n)).copy_from(a);
    let mut rhs = DVector::zeros(n + m);
    rhs.rows_mut(0, n).copy_from(x);
    rhs.rows_mut(n, m).copy_from(b);
    // full-pivot LU plus one step of iterative refinement
    let lu = k.clone().full_piv_lu();
    let mut sol = lu.solve(&rhs).expect("nonsingular KKT system");
    let corr = lu.solve(&(&rhs - &k * &sol)).expect("nonsingular KKT system");
    sol += corr;
    sol.rows(0, n).into_owned()
}

fn criterion_6() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut normal = || -> f64 { rng.random::<f64>() * 2.0 - 1.0 };
    let (mut hyper, mut half, mut lin, mut beaten) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for i in 0..1000 {
        let n = 2 + i % 7;
        let m = 1 + i % n.min(4);
        let a = DMatrix::from_fn(m, n, |_, _| normal());
        let b = DVector::from_fn(m, |_, _| normal());
        let x = DVector::from_fn(n, |_, _| 3.0 * normal());
        let ours = project_hyperplane_euclid(&a, &b, &x).expect("projection");
        let oracle = kkt_hyperplane(&a, &b, &x);
        hyper = hyper.max((ours - &oracle).amax() / (1.0 + oracle.amax()));
    }
    for i in 0..1000 {
        let n = 1 + i % 8;
        let c = DVector::from_fn(n, |_, _| normal());
        let d = normal();
        let x = DVector::from_fn(n, |_, _| 3.0 * normal());
        let ours = project_halfspace_euclid(&c, d, &x).expect("projection");
        // active constraint: equality KKT; inactive: x itself
        let oracle = if c.dot(&x) <= d {
            x.clone()
        } else {
            kkt_hyperplane(&DMatrix::from_row_slice(1, n, c.as_slice()), &DVector::from_element(1, d), &x)
        };
        half = half.max((ours - &oracle).amax() / (1.0 + oracle.amax()));
    }
    for i in 0..1000 {
        let n = 1 + i % 6;
        let root = DMatrix::from_fn(n, n, |_, _| normal());
        let shape = &root * root.transpose() + DMatrix::identity(n, n) * 0.1;
        let center = DVector::from_fn(n, |_, _| normal());
        let c = DVector::from_fn(n, |_, _| normal());
        let ours = lin_opt_ellipsoid(&shape, &center, &c).expect("oracle");
        // eigenbasis route: y = x + U L^{1/2} v / |v|, v = L^{1/2} U^T c
        let eig = shape.clone().symmetric_eigen();
        let sqrt_l = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
        let v = &sqrt_l * eig.eigenvectors.transpose() * &c;
        let oracle = &center + &eig.eigenvectors * &sqrt_l * (&v / v.norm());
        lin = lin.max((&ours - &oracle).amax() / (1.0 + oracle.amax()));
        // sampled feasible points never beat it
        let best = c.dot(&ours);
        for _ in 0..50 {
            let u = DVector::from_fn(n, |_, _| normal());
            let radius = normal().abs();
            let u = &u / u.norm() * radius;
            let y = &center + &eig.eigenvectors * &sqrt_l * u;
            if c.dot(&y) > best + 1e-9 {
                beaten += 1;
            }
        }
    }
    hard(
        hyper <= 1e-9 && half <= 1e-9 && lin <= 1e-9 && beaten == 0,
        format!(
            "3 x 1000 instances: hyperplane {hyper:.1e}, halfspace {half:.1e}, ellipsoid oracle {lin:.1e}, \
             {beaten} sampled points beat the oracle (relative tol 1e-9)"
        ),
    )
}

// ---------------------------------------------------------------------------
// 8, 9. Sweeps.

fn criterion_8() -> Verdict {
    let base = mixture_config(10, 100, 0);
    let table = sweep(&base, SweepAxis::Episodes, &[100, 200, 500, 1000, 2000], 10).expect("sweep");
    let slope = table.slope.unwrap_or(f64::NAN);
    for r in &table.rows {
        println!("    K={:>5} mean regret {:>9.3} +- {:.3}", r.value, r.mean_regret, r.stderr);
    }
    hard(slope <= 0.75, format!("log-log slope of mean regret vs K = {slope:.4} (need <= 0.75)"))
}

fn criterion_9() -> Verdict {
    let base = mixture_config(5, 500, 0);
    let table = sweep(&base, SweepAxis::Horizon, &[5, 10, 20, 40], 5).expect("sweep");
    for r in &table.rows {
        println!("    H={:>3} mean regret {:>9.3} +- {:.3}", r.value, r.mean_regret, r.stderr);
    }
    let ratio = table.rows[3].mean_regret / table.rows[0].mean_regret;
    Verdict {
        passed: ratio <= 2.0,
        hard: false,
        detail: format!("mean regret at H=40 / H=5 = {ratio:.3} (target <= 2, report only)"),
    }
}

// ---------------------------------------------------------------------------
// 10. Lower-bound direction on the expert tree.

fn criterion_10() -> Verdict {
    let (depth, k) = (8usize, 5000usize);
    let threshold = 0.2 * ((depth as f64 / 2.0) * k as f64 * 2f64.ln()).sqrt();
    let regrets: Vec<f64> = (0..20)
        .map(|seed| {
            let cfg = tree_config(depth, "two-stage", k, "hf-o2ps", seed);
            run_experiment(&cfg).expect("run").summary.final_regret
        })
        .collect();
    let mean = regrets.iter().sum::<f64>() / regrets.len() as f64;
    hard(
        mean >= threshold,
        format!("mean regret over 20 seeds {mean:.3} vs threshold {threshold:.3}"),
    )
}

// ---------------------------------------------------------------------------

fn criterion_11() -> Verdict {
    let outcomes = run_invariant_suite(0);
    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| {
            println!("    {o}");
            format!("{}/{}", o.module, o.name)
        })
        .collect();
    hard(
        failed.is_empty(),
        format!("{} checks, {} failed {:?}", outcomes.len(), failed.len(), failed),
    )
}

fn main() -> ExitCode {
    // libtest flags such as --nocapture or a name filter are accepted and ignored
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let wanted = |n: usize| only.as_ref().is_none_or(|o| o.contains(&n));
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut verdicts: Vec<(usize, Verdict)> = Vec::new();
    let mut report = |n: usize, v: Verdict, secs: f64| {
        println!(
            "criterion {n:>2} {}: {} [{secs:.1}s]",
            if v.passed { "PASS" } else if v.hard { "FAIL" } else { "FAIL (report only)" },
            v.detail
        );
        verdicts.push((n, v));
    };
    let simple: [(usize, fn() -> Verdict); 6] = [
        (1, criterion_1),
        (2, criterion_2),
        (5, criterion_5),
        (6, criterion_6),
        (10, criterion_10),
        (11, criterion_11),
    ];
    for &(n, f) in &simple[..4] {
        if wanted(n) {
            let t = Instant::now();
            let v = f();
            report(n, v, t.elapsed().as_secs_f64());
        }
    }
    if wanted(3) || wanted(4) || wanted(7) {
        let t = Instant::now();
        let b = coverage_batch();
        let secs = t.elapsed().as_secs_f64();
        if wanted(3) {
            report(
                3,
                hard(
                    b.covered_seeds * 10 >= 50 * 9,
                    format!("theta* in every confidence set in {}/50 seeds (need >= 45)", b.covered_seeds),
                ),
                secs,
            );
        }
        if wanted(4) {
            report(
                4,
                hard(
                    b.order_violations == 0,
                    format!(
                        "{} violations over {} contained episodes",
                        b.order_violations, b.contained_episodes
                    ),
                ),
                0.0,
            );
        }
        if wanted(7) {
            let frac = b.dominated as f64 / b.steps.max(1) as f64;
            report(
                7,
                hard(
                    b.steps > 0 && frac >= 0.99,
                    format!("{}/{} steps dominated ({:.2}%, need >= 99%)", b.dominated, b.steps, 100.0 * frac),
                ),
                0.0,
            );
        }
    }
    for (n, f) in [(8usize, criterion_8 as fn() -> Verdict), (9, criterion_9)] {
        if wanted(n) {
            let t = Instant::now();
            let v = f();
            report(n, v, t.elapsed().as_secs_f64());
        }
    }
    for &(n, f) in &simple[4..] {
        if wanted(n) {
            let t = Instant::now();
            let v = f();
            report(n, v, t.elapsed().as_secs_f64());
        }
    }
    let failed: Vec<usize> = verdicts.iter().filter(|(_, v)| v.hard && !v.passed).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} criteria run, {} hard failures {:?}",
        verdicts.len(),
        failed.len(),
        failed
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
