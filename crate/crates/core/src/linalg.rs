//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Pivot tolerance used by [`cholesky_spd`].
pub const SPD_PIVOT_TOL: f64 = 1e-10;

/// Cholesky factorization that also rejects pivots below `tol` (relative to
/// the largest diagonal entry of the input).
pub fn cholesky_spd(a: &DMatrix<f64>, tol: f64) -> Result<Cholesky<f64, Dyn>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max).max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::NotPositiveDefinite("Cholesky factorization failed".into()))?;
    let l = chol.l_dirty();
    for i in 0..n {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > tol * scale) {
            return Err(Error::NotPositiveDefinite(format!(
                "pivot {i} is {pivot:e} (tolerance {:e})",
                tol * scale
            )));
        }
    }
    Ok(chol)
}

pub fn is_spd(a: &DMatrix<f64>) -> bool {
    cholesky_spd(a, SPD_PIVOT_TOL).is_ok()
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigen_extremes(a).0
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigen_extremes(a).1
}

/// Largest singular value.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Copy of `v` with entry `skip` removed.
pub fn drop_index(v: &DVector<f64>, skip: usize) -> DVector<f64> {
    DVector::from_iterator(
        v.len() - 1,
        v.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, x)| *x),
    )
}

/// Submatrix on the given row and column index sets.
pub fn submatrix(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_spd(&a, SPD_PIVOT_TOL).is_err());
        assert!(is_spd(&DMatrix::identity(3, 3)));
    }

    #[test]
    fn eigen_extremes_diag() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 2.0]));
        assert_eq!(eigen_extremes(&a), (1.0, 4.0));
        assert!((op_norm(&a) - 4.0).abs() < 1e-12);
    }
}
