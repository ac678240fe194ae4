//! Closed-form Euclidean projections and linear optimization over an ellipsoid.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Euclidean projection onto `{x : A x = b}`: `x - A^T (A A^T)^{-1} (A x - b)`.
/// `A` must have full row rank.
pub fn project_hyperplane_euclid(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if a.ncols() != x.len() || a.nrows() != b.len() {
        return Err(Error::ShapeMismatch("hyperplane dimensions".into()));
    }
    if a.nrows() > a.ncols() {
        return Err(Error::RankDeficient(0.0));
    }
    // A^T = QR gives A^T (A A^T)^{-1} = Q R^{-T} without squaring cond(A).
    let qr = a.transpose().qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    let smallest = r.diagonal().iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if !(smallest > 1e-13 * scale) {
        return Err(Error::RankDeficient(smallest));
    }
    let resid = a * x - b;
    let y = r
        .transpose()
        .solve_lower_triangular(&resid)
        .ok_or(Error::RankDeficient(smallest))?;
    Ok(x - qr.q() * y)
}

/// Euclidean projection onto `{x : c^T x <= d}`: `x - [c^T x - d]_+ / ||c||^2 c`.
pub fn project_halfspace_euclid(c: &DVector<f64>, d: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
    if c.len() != x.len() {
        return Err(Error::ShapeMismatch("halfspace dimensions".into()));
    }
    let nc = c.norm_squared();
    if nc == 0.0 {
        return Err(Error::RankDeficient(0.0));
    }
    let viol = (c.dot(x) - d).max(0.0);
    Ok(x - c * (viol / nc))
}

/// Maximizer of `c^T y` over `{y : (y - x)^T A^{-1} (y - x) <= 1}` for SPD
/// `A`: `y = x + A c / sqrt(c^T A c)`. Pass `-c` to minimize.
pub fn lin_opt_ellipsoid(
    a: &DMatrix<f64>,
    x: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<DVector<f64>> {
    if a.nrows() != x.len() || a.ncols() != x.len() || c.len() != x.len() {
        return Err(Error::ShapeMismatch("ellipsoid dimensions".into()));
    }
    let ac = a * c;
    let q = c.dot(&ac);
    if !(q > 0.0) {
        return Err(Error::Domain(
            "linear objective is zero on the ellipsoid".into(),
        ));
    }
    Ok(x + ac / q.sqrt())
}
