use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::{DMatrix, DVector};

use hfo2ps::instances::{make_basis_mixture, random_reward};
use hfo2ps::linalg::SpdFactor;
use hfo2ps::mdp::{OccupancyMeasure, StochasticPolicy};
use hfo2ps::projection::{build_feasible_set, Hyperplane, InnerConfig};
use hfo2ps::vtr::optimistic_backup;
use hfo2ps::{ConfidenceSet, DykstraConfig, FeasibleSet, LinearMixtureModel};

fn model() -> LinearMixtureModel {
    make_basis_mixture(5, 3, 5, 4, 2.0, 1).unwrap()
}

/// Deterministic positive target over the support of `m`.
fn target(m: &LinearMixtureModel) -> OccupancyMeasure {
    let layout = m.layout().clone();
    let v = (0..layout.len()).map(|i| 0.02 + 0.98 * (i as f64 * 0.618_033_988_7).fract()).collect();
    OccupancyMeasure::new(layout, v).unwrap()
}

fn confidence(m: &LinearMixtureModel) -> ConfidenceSet {
    let d = m.dim();
    let shift = DVector::from_fn(d, |i, _| if i % 2 == 0 { 0.03 } else { -0.03 });
    let center = m.theta_star() + &shift;
    let gram = DMatrix::identity(d, d) * 50.0;
    let radius = 1.5 * (shift.transpose() * &gram * &shift)[(0, 0)].sqrt();
    ConfidenceSet::new(center, gram, radius).unwrap()
}

fn bench_dykstra(c: &mut Criterion) {
    let m = model();
    let w = target(&m);
    let cfg = DykstraConfig::default();
    let affine = FeasibleSet::affine(m.layout().clone()).unwrap();
    c.bench_function("dykstra/affine", |b| b.iter(|| affine.project(black_box(&w), &cfg).unwrap()));
    let set = build_feasible_set(&confidence(&m), &m).unwrap();
    c.bench_function("dykstra/confidence", |b| b.iter(|| set.project(black_box(&w), &cfg).unwrap()));
    let point = build_feasible_set(&ConfidenceSet::point(m.theta_star().clone()), &m).unwrap();
    c.bench_function("dykstra/point", |b| b.iter(|| point.project(black_box(&w), &cfg).unwrap()));
}

fn bench_hyperplane(c: &mut Criterion) {
    let (rows, n) = (3, 12);
    let a = DMatrix::from_fn(rows, n, |i, j| (0.7 * (i + 1) as f64 * (j + 1) as f64).sin());
    let x0 = DVector::from_fn(n, |j, _| 0.5 + (j as f64 * 0.381_966).fract());
    let b = &a * &x0;
    let piece = Hyperplane::new((0..n).collect(), a, b).unwrap();
    let t: Vec<f64> = (0..n).map(|j| 0.1 + (j as f64 * 0.618_034).fract()).collect();
    let mut out = vec![0.0; n];
    let inner = InnerConfig::default();
    c.bench_function("hyperplane_kl/general", |bch| {
        bch.iter(|| piece.project_kl(black_box(&t), &mut out, &inner).unwrap())
    });
}

fn bench_backup(c: &mut Criterion) {
    let m = model();
    let r = random_reward(5, 3, 5, 2).unwrap();
    let pi = StochasticPolicy::uniform(5, 5, 3);
    let gram = SpdFactor::new(&(DMatrix::identity(4, 4) * 10.0)).unwrap();
    c.bench_function("optimistic_backup", |b| {
        b.iter(|| optimistic_backup(&m, &r, &pi, black_box(m.theta_star()), &gram, 1.0).unwrap())
    });
}

criterion_group!(benches, bench_dykstra, bench_hyperplane, bench_backup);
criterion_main!(benches);
