//! Per-block confidence pieces `{z_{h,s,a} = m B theta : m >= 0, theta in C}`.
//!
//! Feasible blocks are nonnegative multiples of a kernel row `p = B theta`
//! with `theta` in the confidence ellipsoid. Writing `theta = theta_0 + N w`
//! with `N` spanning `{theta : 1^T B theta = 0}` turns the set of admissible
//! rows into the image of an ellipsoid in `w`, and the KL projection of a
//! target `t` with mass `T` splits into `p* = argmin KL(p || t / T)` over that
//! image followed by the scale `T exp(-KL(p* || t / T))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::euclid::lin_opt_ellipsoid;
use super::{EllipsoidSolver, InnerConfig};
use crate::error::{Error, Result};
use crate::linalg::{orthonormal_complement, pseudo_inverse, range_basis, SpdFactor, RANK_TOL};

/// Admissible kernel rows for one `(s, a)` under a confidence ellipsoid.
#[derive(Debug, Clone)]
pub enum EllipsoidSlice {
    /// No parameter in the ellipsoid yields a normalized row.
    Empty,
    /// Exactly one admissible row. A zero radius always gives the
    /// normalized parameter closest to the center in the `Sigma` metric.
    Point(DVector<f64>),
    /// `{origin + map w : w^T metric w <= 1}`; `shape` is `metric^{-1}`.
    Ellipsoid {
        origin: DVector<f64>,
        map: DMatrix<f64>,
        metric: DMatrix<f64>,
        shape: DMatrix<f64>,
    },
    /// Unbounded radius: `{origin + map w}`.
    Affine {
        origin: DVector<f64>,
        map: DMatrix<f64>,
    },
}

/// Precomputed geometry of one `(s, a)` feature block.
#[derive(Debug, Clone)]
pub struct BlockGeometry {
    /// `B`: one row `phi(s'|s,a)^T` per stored successor.
    pub features: DMatrix<f64>,
    /// `B theta_hat`.
    pub center: DVector<f64>,
    /// `(B Sigma^{-1/2})^+`.
    pub pinv: DMatrix<f64>,
    pub radius: f64,
    /// Orthonormal basis of the complement of `range(B)`.
    pub range_perp: DMatrix<f64>,
    pub slice: EllipsoidSlice,
    /// Clipped and normalized row of a `Point` slice.
    point_row: Option<Vec<f64>>,
}

/// Slack on `rho^2` below which the slice is treated as a single point.
const POINT_TOL: f64 = 1e-12;

impl BlockGeometry {
    pub fn new(
        features: DMatrix<f64>,
        theta_hat: &DVector<f64>,
        sigma: &DMatrix<f64>,
        sigma_inv_sqrt: &DMatrix<f64>,
        radius: f64,
    ) -> Result<Self> {
        let d = features.ncols();
        if theta_hat.len() != d || sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::ShapeMismatch("block geometry dimensions".into()));
        }
        if !(radius >= 0.0) {
            return Err(Error::param("radius", format!("must be >= 0, got {radius}")));
        }
        let center = &features * theta_hat;
        let pinv = pseudo_inverse(&(&features * sigma_inv_sqrt), RANK_TOL);
        let range_perp = orthonormal_complement(&range_basis(&features, RANK_TOL));
        let slice = Self::slice(&features, theta_hat, sigma, radius)?;
        let point_row = match &slice {
            EllipsoidSlice::Point(p) => Some(clip_normalize(p.as_slice()).0),
            _ => None,
        };
        Ok(Self {
            features,
            center,
            pinv,
            radius,
            range_perp,
            slice,
            point_row,
        })
    }

    fn slice(
        b: &DMatrix<f64>,
        theta_hat: &DVector<f64>,
        sigma: &DMatrix<f64>,
        radius: f64,
    ) -> Result<EllipsoidSlice> {
        let d = b.ncols();
        let e: DVector<f64> = b.row_sum().transpose();
        let ee = e.norm_squared();
        if !(ee > 0.0) {
            return Ok(EllipsoidSlice::Empty);
        }
        let theta_h = &e / ee;
        let e_unit = DMatrix::from_column_slice(d, 1, (&e / ee.sqrt()).as_slice());
        let n = orthonormal_complement(&e_unit);
        let delta = &theta_h - theta_hat;
        if n.ncols() == 0 {
            // d = 1: the only normalized parameter is theta_h
            let dist2 = delta.dot(&(sigma * &delta));
            return Ok(if radius == 0.0 || radius.is_infinite() || dist2 <= radius * radius + POINT_TOL {
                EllipsoidSlice::Point(b * theta_h)
            } else {
                EllipsoidSlice::Empty
            });
        }
        let q = n.transpose() * sigma * &n;
        let qf = SpdFactor::new(&q)?;
        let g = n.transpose() * sigma * &delta;
        let u_c = -qf.solve(&g);
        let theta_c = &theta_h + &n * &u_c;
        let origin = b * &theta_c;
        let map = b * &n;
        if radius.is_infinite() {
            return Ok(EllipsoidSlice::Affine { origin, map });
        }
        if radius == 0.0 {
            return Ok(EllipsoidSlice::Point(origin));
        }
        // ||theta - theta_hat||^2_Sigma restricted to the slice, at its minimum
        let base = delta.dot(&(sigma * &delta)) - g.dot(&qf.solve(&g));
        let rho2 = radius * radius - base.max(0.0);
        if rho2 < -POINT_TOL * (1.0 + radius * radius) {
            return Ok(EllipsoidSlice::Empty);
        }
        if rho2 <= POINT_TOL * (1.0 + radius * radius) {
            return Ok(EllipsoidSlice::Point(origin));
        }
        let metric = &q / rho2;
        let shape = qf.inverse() * rho2;
        Ok(EllipsoidSlice::Ellipsoid {
            origin,
            map,
            metric,
            shape,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }

    /// Violation of `||(B Sigma^{-1/2})^+ (z - |z| B theta_hat)|| <= |z| radius`
    /// plus the distance of `z` from `range(B)`; for a single admissible row
    /// `p`, the l1 distance `||z - |z| p||_1`. Zero-mass blocks pass.
    pub fn residual(&self, z: &[f64]) -> f64 {
        let m: f64 = z.iter().sum();
        if !(m > 0.0) {
            return 0.0;
        }
        if let Some(p) = &self.point_row {
            return z.iter().zip(p).map(|(x, q)| (x - m * q).abs()).sum();
        }
        let zv = DVector::from_column_slice(z);
        let ellipsoid = if self.radius.is_infinite() {
            0.0
        } else {
            let v = &self.pinv * (&zv - &self.center * m);
            (v.norm() - m * self.radius).max(0.0)
        };
        let range = if self.range_perp.ncols() > 0 {
            (self.range_perp.transpose() * &zv).norm()
        } else {
            0.0
        };
        ellipsoid + range
    }
}

/// Outcome of one ellipsoid-piece projection.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EllipsoidOutcome {
    pub iterations: usize,
    /// The admissible set had no strictly positive row; the result was clipped.
    pub clipped: bool,
    /// The admissible set was empty; the target was returned unchanged.
    pub empty: bool,
}

/// Confidence piece for the block `(h, s, a)`.
#[derive(Debug, Clone)]
pub struct OccupancyEllipsoid {
    pub block: (usize, usize, usize),
    coords: Vec<usize>,
    geometry: Arc<BlockGeometry>,
}

impl OccupancyEllipsoid {
    pub fn new(
        block: (usize, usize, usize),
        coords: Vec<usize>,
        geometry: Arc<BlockGeometry>,
    ) -> Result<Self> {
        if coords.len() != geometry.len() {
            return Err(Error::ShapeMismatch(
                "ellipsoid coords do not match the feature block".into(),
            ));
        }
        Ok(Self {
            block,
            coords,
            geometry,
        })
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn geometry(&self) -> &BlockGeometry {
        &self.geometry
    }

    pub fn residual_local(&self, z: &[f64]) -> f64 {
        self.geometry.residual(z)
    }

    /// KL projection of a nonnegative target onto the cone of admissible rows.
    pub fn project_kl(
        &self,
        t: &[f64],
        out: &mut [f64],
        inner: &InnerConfig,
    ) -> Result<EllipsoidOutcome> {
        let total: f64 = t.iter().sum();
        if !(total > 0.0) {
            out.copy_from_slice(t);
            return Ok(EllipsoidOutcome::default());
        }
        if self.geometry.residual(t) <= inner.tol * total {
            out.copy_from_slice(t);
            return Ok(EllipsoidOutcome::default());
        }
        let y: Vec<f64> = t
            .iter()
            .map(|&x| (x / total).max(f64::MIN_POSITIVE))
            .collect();
        let mut outcome = EllipsoidOutcome::default();
        let p = match &self.geometry.slice {
            EllipsoidSlice::Empty => {
                outcome.empty = true;
                out.copy_from_slice(t);
                return Ok(outcome);
            }
            EllipsoidSlice::Point(p) => {
                let (p, clipped) = clip_normalize(p.as_slice());
                outcome.clipped = clipped;
                p
            }
            EllipsoidSlice::Ellipsoid {
                origin,
                map,
                metric,
                shape,
            } => {
                let solver = RowSolver {
                    origin,
                    map,
                    metric: Some((metric, shape)),
                    y: &y,
                };
                solver.solve(inner, &mut outcome)?
            }
            EllipsoidSlice::Affine { origin, map } => {
                let solver = RowSolver {
                    origin,
                    map,
                    metric: None,
                    y: &y,
                };
                solver.solve(inner, &mut outcome)?
            }
        };
        let kl = kl_rows(&p, &y);
        let scale = total * (-kl).exp();
        for (o, pi) in out.iter_mut().zip(&p) {
            *o = scale * pi;
        }
        Ok(outcome)
    }
}

fn clip_normalize(p: &[f64]) -> (Vec<f64>, bool) {
    let clipped = p.iter().any(|&x| x < 0.0);
    let mut q: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let s: f64 = q.iter().sum();
    if s > 0.0 {
        q.iter_mut().for_each(|x| *x /= s);
    } else {
        let n = q.len() as f64;
        q.iter_mut().for_each(|x| *x = 1.0 / n);
    }
    (q, clipped)
}

/// `sum p log(p / y)` with `0 log 0 = 0`.
fn kl_rows(p: &[f64], y: &[f64]) -> f64 {
    p.iter()
        .zip(y)
        .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() } else { 0.0 })
        .sum()
}

/// Minimizes `KL(origin + map w || y)` over `w^T metric w <= 1` (or all `w`).
struct RowSolver<'a> {
    origin: &'a DVector<f64>,
    map: &'a DMatrix<f64>,
    metric: Option<(&'a DMatrix<f64>, &'a DMatrix<f64>)>,
    y: &'a [f64],
}

const NEWTON_MAX: usize = 200;

impl RowSolver<'_> {
    fn row(&self, w: &DVector<f64>) -> DVector<f64> {
        self.origin + self.map * w
    }

    fn norm2(&self, w: &DVector<f64>) -> f64 {
        match self.metric {
            Some((m, _)) => w.dot(&(m * w)),
            None => 0.0,
        }
    }

    fn objective(&self, w: &DVector<f64>, mu: f64) -> f64 {
        let p = self.row(w);
        if p.iter().any(|&x| !(x > 0.0)) {
            return f64::INFINITY;
        }
        kl_rows(p.as_slice(), self.y) + 0.5 * mu * self.norm2(w)
    }

    fn solve(&self, inner: &InnerConfig, outcome: &mut EllipsoidOutcome) -> Result<Vec<f64>> {
        let Some(w0) = self.positive_start() else {
            // no strictly positive admissible row: fall back to the clipped
            // row closest to the target direction
            outcome.clipped = true;
            let w = self.least_squares_in_set();
            return Ok(clip_normalize(self.row(&w).as_slice()).0);
        };
        let (w_free, it) = self.newton(&w0, 0.0, inner)?;
        outcome.iterations += it;
        let Some((metric, shape)) = self.metric else {
            return Ok(self.row(&w_free).as_slice().to_vec());
        };
        if w_free.dot(&(metric * &w_free)) <= 1.0 {
            return Ok(self.row(&w_free).as_slice().to_vec());
        }
        let w = match inner.ellipsoid {
            EllipsoidSolver::Multiplier => self.multiplier_path(&w_free, &w0, inner, outcome)?,
            EllipsoidSolver::FrankWolfe => self.frank_wolfe(&w_free, &w0, shape, inner, outcome)?,
        };
        Ok(self.row(&w).as_slice().to_vec())
    }

    /// Gradient and Hessian of `KL(row(w) || y) + mu/2 w^T metric w`.
    fn derivatives(&self, w: &DVector<f64>, mu: f64) -> (DVector<f64>, DMatrix<f64>) {
        let p = self.row(w);
        let lg = DVector::from_iterator(
            p.len(),
            p.iter().zip(self.y).map(|(a, b)| (a / b).ln()),
        );
        let mut g = self.map.transpose() * lg;
        let inv = DVector::from_iterator(p.len(), p.iter().map(|a| 1.0 / a));
        let mut h = self.map.transpose() * DMatrix::from_diagonal(&inv) * self.map;
        if let Some((m, _)) = self.metric {
            if mu > 0.0 {
                g += m * w * mu;
                h += m * mu;
            }
        }
        (g, h)
    }

    fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> DVector<f64> {
        let mut h = h.clone();
        let tr = h.trace().abs().max(1e-300);
        let mut ridge = 1e-14 * tr;
        loop {
            if let Ok(f) = SpdFactor::new(&h) {
                return -f.solve(g);
            }
            for i in 0..h.nrows() {
                h[(i, i)] += ridge;
            }
            ridge *= 10.0;
        }
    }

    /// Damped Newton on the penalized objective from a strictly positive start.
    fn newton(
        &self,
        start: &DVector<f64>,
        mu: f64,
        inner: &InnerConfig,
    ) -> Result<(DVector<f64>, usize)> {
        let mut w = start.clone();
        let mut f = self.objective(&w, mu);
        for it in 0..NEWTON_MAX {
            let (g, h) = self.derivatives(&w, mu);
            let step = Self::newton_step(&h, &g);
            let dec = -g.dot(&step);
            // squared Newton decrement; 1e-22 is below the objective's resolution
            if !(dec > (inner.tol * inner.tol).max(1e-22)) {
                // a final full step is still accurate below the line-search resolution
                let cand = &w + &step;
                if self.row(&cand).iter().all(|&x| x > 0.0) {
                    w = cand;
                }
                return Ok((w, it));
            }
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..80 {
                let cand = &w + &step * s;
                let fc = self.objective(&cand, mu);
                if fc < f - 0.25 * s * dec || (fc < f && s < 1.0) {
                    w = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                // the objective cannot resolve the decrease any more; near the
                // optimum the full step is the better estimate
                if dec < 1e-10 {
                    let cand = &w + &step;
                    if self.row(&cand).iter().all(|&x| x > 0.0) {
                        w = cand;
                    }
                }
                return Ok((w, it));
            }
        }
        let (g, _) = self.derivatives(&w, mu);
        Err(Error::InnerNotConverged {
            iterations: NEWTON_MAX,
            gap: g.norm(),
        })
    }

    /// Solves the KKT system `grad KL + mu metric w = 0`, `w^T metric w = 1`
    /// by a safeguarded Newton iteration on the multiplier.
    fn multiplier_path(
        &self,
        w_free: &DVector<f64>,
        w0: &DVector<f64>,
        inner: &InnerConfig,
        outcome: &mut EllipsoidOutcome,
    ) -> Result<DVector<f64>> {
        let (metric, _) = self.metric.expect("bounded slice");
        let mut lo = 0.0;
        let mut hi = f64::INFINITY;
        let mut w = if w0.dot(&(metric * w0)) <= 1.0 {
            w0.clone()
        } else {
            w_free.clone()
        };
        // KKT multiplier at the radially scaled free optimum as a first guess
        let mut mu = 1.0;
        if self.origin.iter().all(|&x| x > 0.0) {
            let wb = w_free / self.norm2(w_free).sqrt();
            let (g, _) = self.derivatives(&wb, 0.0);
            let sw = metric * &wb;
            let guess = -g.dot(&sw) / sw.norm_squared();
            if guess > 0.0 && guess.is_finite() {
                mu = guess;
                w = wb;
            }
        }
        for _ in 0..500 {
            let (wm, it) = self.newton(&w, mu, inner)?;
            outcome.iterations += it;
            w = wm;
            let sw = metric * &w;
            let c = w.dot(&sw) - 1.0;
            // w carries ~1e-11 relative error from the inner Newton solve
            if c.abs() <= inner.tol.max(1e-10) {
                return Ok(w);
            }
            if c > 0.0 {
                lo = mu;
            } else {
                hi = mu;
            }
            if hi.is_finite() && hi - lo <= 1e-15 * hi {
                return Ok(w);
            }
            // dc/dmu = -2 (S w)^T H^{-1} (S w)
            let (_, h) = self.derivatives(&w, mu);
            let v = -Self::newton_step(&h, &sw);
            let dc = -2.0 * sw.dot(&v);
            let newton = if dc < 0.0 { mu - c / dc } else { f64::NAN };
            mu = if newton.is_finite() && newton > lo && newton < hi {
                newton
            } else if hi.is_finite() {
                if lo > 0.0 {
                    (lo * hi).sqrt()
                } else {
                    0.5 * hi
                }
            } else {
                mu * 4.0
            };
        }
        Err(Error::InnerNotConverged {
            iterations: 500,
            gap: (w.dot(&(metric * &w)) - 1.0).abs(),
        })
    }

    /// Frank-Wolfe on the ellipsoid with the closed-form linear oracle and an
    /// exact line search capped to keep the row positive.
    fn frank_wolfe(
        &self,
        w_free: &DVector<f64>,
        w0: &DVector<f64>,
        shape: &DMatrix<f64>,
        inner: &InnerConfig,
        outcome: &mut EllipsoidOutcome,
    ) -> Result<DVector<f64>> {
        let zero = DVector::zeros(w_free.len());
        let positive_origin = self.origin.iter().all(|&x| x > 0.0);
        let mut w = if positive_origin {
            // rows are affine in w, so the segment from 0 to w_free stays positive
            w_free / self.norm2(w_free).sqrt()
        } else {
            w0.clone()
        };
        let mut gap = f64::INFINITY;
        for it in 0..inner.max_iters {
            let (g, _) = self.derivatives(&w, 0.0);
            if g.norm() == 0.0 {
                outcome.iterations += it;
                return Ok(w);
            }
            let v = lin_opt_ellipsoid(shape, &zero, &(-&g))?;
            let dir = &v - &w;
            gap = -g.dot(&dir);
            if gap <= inner.tol {
                outcome.iterations += it;
                return Ok(w);
            }
            let p = self.row(&w);
            let dp = self.map * &dir;
            let mut gmax: f64 = 1.0;
            for (a, b) in p.iter().zip(dp.iter()) {
                if *b < 0.0 {
                    gmax = gmax.min(-a / b * (1.0 - 1e-12));
                }
            }
            let slope = |s: f64| -> (f64, f64) {
                let mut d1 = 0.0;
                let mut d2 = 0.0;
                for ((a, b), y) in p.iter().zip(dp.iter()).zip(self.y) {
                    let q = a + s * b;
                    d1 += b * (q / y).ln();
                    d2 += b * b / q;
                }
                (d1, d2)
            };
            let step = if slope(gmax).0 <= 0.0 {
                gmax
            } else {
                let (mut lo, mut hi) = (0.0, gmax);
                let mut s = 0.5 * gmax;
                for _ in 0..100 {
                    let (d1, d2) = slope(s);
                    if d1 > 0.0 {
                        hi = s;
                    } else {
                        lo = s;
                    }
                    let nt = s - d1 / d2;
                    s = if nt > lo && nt < hi { nt } else { 0.5 * (lo + hi) };
                    if d1.abs() <= 1e-16 || hi - lo <= 1e-16 {
                        break;
                    }
                }
                s
            };
            w += dir * step;
        }
        Err(Error::InnerNotConverged {
            iterations: inner.max_iters,
            gap,
        })
    }

    /// A `w` in the set with a strictly positive row, if one is found.
    fn positive_start(&self) -> Option<DVector<f64>> {
        let r = self.map.ncols();
        let zero = DVector::zeros(r);
        let inside = |w: &DVector<f64>| self.norm2(w) <= 1.0;
        let positive = |w: &DVector<f64>| self.row(w).iter().all(|&x| x > 0.0);
        if positive(&zero) {
            return Some(zero);
        }
        let ls = self.least_squares_in_set();
        if inside(&ls) && positive(&ls) {
            return Some(ls);
        }
        // projected supergradient ascent on min_i row_i(w)
        let (metric_inv, radius) = match self.metric {
            Some((_, shape)) => (shape.clone(), 1.0),
            None => {
                let rad = 10.0 * (1.0 + ls.norm());
                (DMatrix::identity(r, r) * (rad * rad), 1.0)
            }
        };
        let metric = match self.metric {
            Some((m, _)) => m.clone(),
            None => metric_inv.clone().try_inverse()?,
        };
        let norm = |w: &DVector<f64>| w.dot(&(&metric * w)).max(0.0).sqrt();
        let mut w = if norm(&ls) <= radius { ls } else { &ls / norm(&ls) };
        let mut best = (f64::NEG_INFINITY, w.clone());
        for t in 0..4000 {
            let p = self.row(&w);
            let (i, &m) = p
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("nonempty row");
            if m > best.0 {
                best = (m, w.clone());
            }
            if m > 0.0 {
                break;
            }
            let g: DVector<f64> = self.map.row(i).transpose();
            let dg = &metric_inv * &g;
            let gn = g.dot(&dg).sqrt();
            if gn == 0.0 {
                break;
            }
            w += dg * (0.5 / (gn * (1.0 + t as f64).sqrt()));
            let n = norm(&w);
            if n > radius {
                w /= n / radius;
            }
        }
        (best.0 > 0.0).then_some(best.1)
    }

    /// Least-squares fit of the row to `y`, pulled back into the set.
    fn least_squares_in_set(&self) -> DVector<f64> {
        let y = DVector::from_column_slice(self.y);
        let w = pseudo_inverse(self.map, RANK_TOL) * (y - self.origin);
        let n = self.norm2(&w);
        if n > 1.0 {
            &w / n.sqrt()
        } else {
            w
        }
    }
}
