//! Hyperplane and halfspace pieces and their Bregman projections.

use nalgebra::{DMatrix, DVector};

use super::euclid::{project_halfspace_euclid, project_hyperplane_euclid};
use super::potential::kl_divergence;
use super::{InnerConfig, InnerSolver};
use crate::error::{Error, Result};
use crate::linalg::{SpdFactor, RANK_TOL};

#[derive(Debug, Clone, PartialEq)]
enum RowShape {
    /// One row with equal positive coefficients.
    Sum,
    /// One row of `+1` / `-1` coefficients with zero right-hand side.
    Balance,
    General,
}

/// `{x : A x_coords = b}` on a subset of coordinates.
#[derive(Debug, Clone)]
pub struct Hyperplane {
    coords: Vec<usize>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    shape: RowShape,
}

impl Hyperplane {
    /// `a` has one column per entry of `coords` and must have full row rank.
    pub fn new(coords: Vec<usize>, a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if a.ncols() != coords.len() || a.nrows() != b.len() || a.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "hyperplane: A is {}x{}, b has {}, {} coords",
                a.nrows(),
                a.ncols(),
                b.len(),
                coords.len()
            )));
        }
        if a.nrows() > a.ncols() {
            return Err(Error::RankDeficient(0.0));
        }
        let sv = a.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > RANK_TOL * smax) {
            return Err(Error::RankDeficient(smin));
        }
        let shape = if a.nrows() == 1 {
            let row = a.row(0);
            let c0 = row[0];
            if c0 > 0.0 && row.iter().all(|&c| c == c0) {
                RowShape::Sum
            } else if b[0] == 0.0
                && row.iter().all(|&c| c == 1.0 || c == -1.0)
                && row.iter().any(|&c| c > 0.0)
                && row.iter().any(|&c| c < 0.0)
            {
                RowShape::Balance
            } else {
                RowShape::General
            }
        } else {
            RowShape::General
        };
        Ok(Self {
            coords,
            a,
            b,
            shape,
        })
    }

    /// `{x : sum_j x_j = total}` over `coords`.
    pub fn sum(coords: Vec<usize>, total: f64) -> Result<Self> {
        let n = coords.len();
        Self::new(
            coords,
            DMatrix::from_element(1, n, 1.0),
            DVector::from_element(1, total),
        )
    }

    /// `{x : sum_{j in pos} x_j = sum_{j in neg} x_j}`.
    pub fn balance(pos: &[usize], neg: &[usize]) -> Result<Self> {
        let mut coords = pos.to_vec();
        coords.extend_from_slice(neg);
        let mut row = vec![1.0; pos.len()];
        row.extend(std::iter::repeat_n(-1.0, neg.len()));
        let n = coords.len();
        Self::new(
            coords,
            DMatrix::from_row_slice(1, n, &row),
            DVector::zeros(1),
        )
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn rhs(&self) -> &DVector<f64> {
        &self.b
    }

    /// `max_i |(A x - b)_i|` on local values.
    pub fn residual_local(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.a.nrows() {
            let v: f64 = self.a.row(i).iter().zip(x).map(|(c, x)| c * x).sum();
            worst = worst.max((v - self.b[i]).abs());
        }
        worst
    }

    pub fn project_euclid(&self, t: &[f64], out: &mut [f64]) -> Result<()> {
        let x = project_hyperplane_euclid(&self.a, &self.b, &DVector::from_column_slice(t))?;
        out.copy_from_slice(x.as_slice());
        Ok(())
    }

    /// KL projection of a positive target.
    pub fn project_kl(&self, t: &[f64], out: &mut [f64], inner: &InnerConfig) -> Result<usize> {
        if inner.solver == InnerSolver::ProjectedGradient {
            return pgd_kl(t, out, inner, |x| {
                project_hyperplane_euclid(&self.a, &self.b, x)
            });
        }
        match self.shape {
            RowShape::Sum => {
                let c = self.a[(0, 0)];
                let s: f64 = t.iter().sum::<f64>() * c;
                if !(s > 0.0) {
                    return Err(Error::InfeasiblePiece("scaling of a zero block".into()));
                }
                let f = self.b[0] / s;
                for (o, x) in out.iter_mut().zip(t) {
                    *o = x * f;
                }
                Ok(1)
            }
            RowShape::Balance => {
                let row = self.a.row(0);
                let (mut p, mut n) = (0.0, 0.0);
                for (c, x) in row.iter().zip(t) {
                    if *c > 0.0 {
                        p += x;
                    } else {
                        n += x;
                    }
                }
                if !(p > 0.0 && n > 0.0) {
                    return Err(Error::InfeasiblePiece(
                        "flow balance with an empty side".into(),
                    ));
                }
                // both sides move to the geometric mean
                let up = (n / p).sqrt();
                let down = (p / n).sqrt();
                for ((o, x), c) in out.iter_mut().zip(t).zip(row.iter()) {
                    *o = if *c > 0.0 { x * up } else { x * down };
                }
                Ok(1)
            }
            RowShape::General => dual_newton(&self.a, &self.b, t, out, inner),
        }
    }
}

/// Newton's method on the dual of `min KL(x, t) s.t. A x = b`:
/// `x(l) = t * exp(A^T l)`.
fn dual_newton(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    t: &[f64],
    out: &mut [f64],
    inner: &InnerConfig,
) -> Result<usize> {
    let (m, n) = a.shape();
    let mut lam = DVector::<f64>::zeros(m);
    let scale = 1.0 + b.amax();
    let eval = |lam: &DVector<f64>, x: &mut [f64]| -> f64 {
        let s = a.transpose() * lam;
        let mut g = 0.0;
        for j in 0..n {
            x[j] = t[j] * s[j].exp();
            g += x[j];
        }
        g - b.dot(lam)
    };
    let mut x = vec![0.0; n];
    let mut g = eval(&lam, &mut x);
    for it in 0..inner.max_iters {
        let xv = DVector::from_column_slice(&x);
        let grad = a * &xv - b;
        if grad.amax() <= inner.tol * scale {
            out.copy_from_slice(&x);
            return Ok(it);
        }
        let mut hess = a * DMatrix::from_diagonal(&xv) * a.transpose();
        let tr = hess.trace().max(1e-300);
        let step = loop {
            match SpdFactor::new(&hess) {
                Ok(f) => break -f.solve(&grad),
                Err(_) => {
                    for i in 0..m {
                        hess[(i, i)] += 1e-12 * tr;
                    }
                }
            }
        };
        let slope = grad.dot(&step);
        let mut s = 1.0;
        let mut trial = vec![0.0; n];
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &lam + &step * s;
            let gc = eval(&cand, &mut trial);
            // near the optimum the dual decrease falls below rounding, so a
            // step that halves the residual is also taken
            let armijo = gc.is_finite() && gc <= g + 1e-4 * s * slope;
            let shrinks = || {
                let r = a * DVector::from_column_slice(&trial) - b;
                r.iter().all(|v| v.is_finite()) && r.amax() <= 0.5 * grad.amax()
            };
            if armijo && s * slope < -f64::EPSILON * g.abs().max(1.0) || gc.is_finite() && shrinks() {
                lam = cand;
                g = gc;
                x.copy_from_slice(&trial);
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            // no further decrease possible in floating point
            let gap = grad.amax();
            if gap <= 1e3 * inner.tol * scale {
                out.copy_from_slice(&x);
                return Ok(it);
            }
            return Err(Error::InnerNotConverged { iterations: it, gap });
        }
    }
    let xv = DVector::from_column_slice(&x);
    let gap = (a * &xv - b).amax();
    Err(Error::InnerNotConverged {
        iterations: inner.max_iters,
        gap,
    })
}

/// `{x : c^T x_coords <= d}`.
#[derive(Debug, Clone)]
pub struct Halfspace {
    coords: Vec<usize>,
    c: DVector<f64>,
    d: f64,
}

impl Halfspace {
    pub fn new(coords: Vec<usize>, c: DVector<f64>, d: f64) -> Result<Self> {
        if c.len() != coords.len() {
            return Err(Error::ShapeMismatch("halfspace dimensions".into()));
        }
        if c.iter().all(|&v| v == 0.0) {
            return Err(Error::RankDeficient(0.0));
        }
        Ok(Self { coords, c, d })
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }
    pub fn normal(&self) -> &DVector<f64> {
        &self.c
    }
    pub fn offset(&self) -> f64 {
        self.d
    }

    pub fn residual_local(&self, x: &[f64]) -> f64 {
        let v: f64 = self.c.iter().zip(x).map(|(c, x)| c * x).sum();
        (v - self.d).max(0.0)
    }

    pub fn project_euclid(&self, t: &[f64], out: &mut [f64]) -> Result<()> {
        let x = project_halfspace_euclid(&self.c, self.d, &DVector::from_column_slice(t))?;
        out.copy_from_slice(x.as_slice());
        Ok(())
    }

    pub fn project_kl(&self, t: &[f64], out: &mut [f64], inner: &InnerConfig) -> Result<usize> {
        let f = |lam: f64| -> (f64, f64) {
            let mut v = -self.d;
            let mut dv = 0.0;
            for (c, x) in self.c.iter().zip(t) {
                let e = x * (lam * c).exp();
                v += c * e;
                dv += c * c * e;
            }
            (v, dv)
        };
        let (f0, _) = f(0.0);
        if f0 <= 0.0 {
            out.copy_from_slice(t);
            return Ok(0);
        }
        if inner.solver == InnerSolver::ProjectedGradient {
            return pgd_kl(t, out, inner, |x| project_halfspace_euclid(&self.c, self.d, x));
        }
        // f is increasing in lam; the multiplier is the root with lam < 0
        let mut lo = -1.0;
        let mut k = 0;
        while f(lo).0 > 0.0 {
            lo *= 2.0;
            k += 1;
            if k > 60 {
                return Err(Error::InfeasiblePiece(
                    "halfspace does not meet the positive orthant".into(),
                ));
            }
        }
        let mut hi = 0.0;
        let mut lam = 0.5 * lo;
        let scale = 1.0 + self.d.abs();
        for it in 0..inner.max_iters {
            let (v, dv) = f(lam);
            if v.abs() <= inner.tol * scale {
                for ((o, x), c) in out.iter_mut().zip(t).zip(self.c.iter()) {
                    *o = x * (lam * c).exp();
                }
                return Ok(it);
            }
            if v > 0.0 {
                hi = lam;
            } else {
                lo = lam;
            }
            let newton = lam - v / dv;
            lam = if dv > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= 1e-16 * (1.0 + lam.abs()) {
                for ((o, x), c) in out.iter_mut().zip(t).zip(self.c.iter()) {
                    *o = x * (lam * c).exp();
                }
                return Ok(it);
            }
        }
        Err(Error::InnerNotConverged {
            iterations: inner.max_iters,
            gap: f(lam).0.abs(),
        })
    }
}

/// Projected gradient descent on `KL(x, t)` with Euclidean sub-projections
/// onto the piece.
fn pgd_kl(
    t: &[f64],
    out: &mut [f64],
    inner: &InnerConfig,
    euclid: impl Fn(&DVector<f64>) -> Result<DVector<f64>>,
) -> Result<usize> {
    let target = DVector::from_column_slice(t);
    let mut x = euclid(&target)?;
    if x.iter().any(|&v| !(v > 0.0)) {
        // alternate with a shifted orthant until the piece yields a positive point
        let floor = 1e-3 * target.mean().max(f64::MIN_POSITIVE);
        for _ in 0..1000 {
            x = euclid(&x.map(|v| v.max(floor)))?;
            if x.iter().all(|&v| v > 0.0) {
                break;
            }
        }
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InfeasiblePiece(
            "no positive starting point for projected gradient".into(),
        ));
    }
    let obj = |x: &DVector<f64>| kl_divergence(x.as_slice(), t).unwrap_or(f64::INFINITY);
    let mut fx = obj(&x);
    let mut eta = x.min();
    for it in 0..inner.max_iters {
        let grad = DVector::from_iterator(
            x.len(),
            x.iter().zip(t).map(|(a, b)| (a / b.max(f64::MIN_POSITIVE)).ln()),
        );
        let mut step = eta * 2.0;
        let mut moved = None;
        for _ in 0..80 {
            let y = euclid(&(&x - &grad * step))?;
            if y.iter().all(|&v| v > 0.0) {
                let fy = obj(&y);
                let dist = (&y - &x).norm_squared();
                if fy <= fx - 0.5 * dist / step * 1e-4 || dist == 0.0 {
                    moved = Some((y, fy, step));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((y, fy, s)) = moved else {
            out.copy_from_slice(x.as_slice());
            return Ok(it);
        };
        let change = (&y - &x).amax();
        x = y;
        fx = fy;
        eta = s;
        if change <= inner.tol * (1.0 + x.amax()) {
            out.copy_from_slice(x.as_slice());
            return Ok(it);
        }
    }
    Err(Error::InnerNotConverged {
        iterations: inner.max_iters,
        gap: fx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> InnerConfig {
        InnerConfig::default()
    }

    #[test]
    fn sum_piece_is_simplex_scaling() {
        let h = Hyperplane::sum(vec![0, 1, 2], 1.0).unwrap();
        let t = [0.2, 0.6, 1.2];
        let mut out = [0.0; 3];
        h.project_kl(&t, &mut out, &cfg()).unwrap();
        for (o, x) in out.iter().zip(&t) {
            assert!((o - x / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn general_and_pgd_agree_with_closed_form_balance() {
        let h = Hyperplane::balance(&[0, 1], &[2]).unwrap();
        let t = [0.3, 0.1, 0.9];
        let mut fast = [0.0; 3];
        h.project_kl(&t, &mut fast, &cfg()).unwrap();
        assert!(h.residual_local(&fast) < 1e-15);
        let mut slow = [0.0; 3];
        dual_newton(h.matrix(), h.rhs(), &t, &mut slow, &cfg()).unwrap();
        let mut pgd = [0.0; 3];
        let pcfg = InnerConfig {
            solver: InnerSolver::ProjectedGradient,
            ..cfg()
        };
        h.project_kl(&t, &mut pgd, &pcfg).unwrap();
        for i in 0..3 {
            assert!((fast[i] - slow[i]).abs() < 1e-12);
            assert!((fast[i] - pgd[i]).abs() < 1e-8, "{fast:?} {pgd:?}");
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!(matches!(
            Hyperplane::new(vec![0, 1], a, DVector::zeros(2)),
            Err(Error::RankDeficient(_))
        ));
    }

    #[test]
    fn halfspace_kl_active_and_inactive() {
        let h = Halfspace::new(vec![0, 1], DVector::from_vec(vec![1.0, 0.0]), 0.5).unwrap();
        let mut out = [0.0; 2];
        h.project_kl(&[0.3, 0.7], &mut out, &cfg()).unwrap();
        assert_eq!(out, [0.3, 0.7]);
        h.project_kl(&[0.9, 0.7], &mut out, &cfg()).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-12);
        assert_eq!(out[1], 0.7);
    }
}
