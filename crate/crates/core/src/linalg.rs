//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::ShapeMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let chol = Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite)?;
        Ok(Self { chol })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// `v^T M^{-1} v`.
    pub fn quad_inv(&self, v: &DVector<f64>) -> f64 {
        // ||L^{-1} v||^2
        let mut w = v.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut w);
        w.norm_squared().max(0.0)
    }

    /// `sqrt(v^T M^{-1} v)`.
    pub fn inv_norm(&self, v: &DVector<f64>) -> f64 {
        self.quad_inv(v).sqrt()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        (0..l.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// `sqrt(v^T M v)` for a symmetric positive semi-definite `M`.
pub fn quad_norm(m: &DMatrix<f64>, v: &DVector<f64>) -> f64 {
    v.dot(&(m * v)).max(0.0).sqrt()
}

/// Symmetrize in place: `(M + M^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn inv_sqrt_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|&l| l <= 0.0 || !l.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    let mut out = &eig.eigenvectors * d * eig.eigenvectors.transpose();
    symmetrize(&mut out);
    Ok(out)
}

/// Singular values below `rel_tol * sigma_max` are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Moore-Penrose pseudoinverse via SVD.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (vt.row(k).transpose() / s) * u.column(k).transpose();
        }
    }
    out
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn range_basis(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.as_ref().expect("u requested");
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > rel_tol * smax && s > 0.0)
        .map(|(k, _)| u.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(r, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns of `basis`.
pub fn orthonormal_complement(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    if basis.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let mut proj = DMatrix::identity(n, n) - basis * basis.transpose();
    symmetrize(&mut proj);
    // eigenvalues of a projector are 0 or 1, so the split at 1/2 is robust
    let eig = SymmetricEigen::new(proj);
    let cols: Vec<_> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.5)
        .map(|(k, _)| eig.eigenvectors.column(k).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_full_rank_square_is_inverse() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pseudo_inverse(&m, RANK_TOL);
        let id = &m * &p;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn pinv_satisfies_penrose_conditions_for_rank_deficient() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 0.0, 0.0]);
        let p = pseudo_inverse(&m, RANK_TOL);
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert!((&p * &m * &p - &p).norm() < 1e-12);
    }

    #[test]
    fn complement_is_orthogonal() {
        let e = DMatrix::from_column_slice(3, 1, &[1.0, 1.0, 1.0]) / 3f64.sqrt();
        let c = orthonormal_complement(&e);
        assert_eq!(c.ncols(), 2);
        assert!((e.transpose() * &c).norm() < 1e-12);
        assert!((c.transpose() * &c - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn spd_factor_quadratic_form() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let f = SpdFactor::new(&m).unwrap();
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let direct = v.dot(&(m.clone().try_inverse().unwrap() * &v));
        assert!((f.quad_inv(&v) - direct).abs() < 1e-14);
        assert!((f.log_det() - 7f64.ln()).abs() < 1e-14);
        let s = inv_sqrt_spd(&m).unwrap();
        assert!((&s * &m * &s - DMatrix::identity(2, 2)).norm() < 1e-12);
    }
}
