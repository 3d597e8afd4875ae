//! Dense symmetric helpers shared by the spectral and regression modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative threshold below which eigenvalues are treated as exact zeros.
pub const EIGEN_CLAMP: f64 = 1e-14;

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn check_square(m: &DMatrix<f64>) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Eigendecomposition sorted by descending eigenvalue, with values below
/// `EIGEN_CLAMP * max` (and negatives) set to zero.
pub(crate) fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let values = DVector::from_iterator(
        n,
        order.iter().map(|&i| {
            let v = eig.eigenvalues[i];
            if v <= EIGEN_CLAMP * top {
                0.0
            } else {
                v
            }
        }),
    );
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Raw (unclamped) smallest eigenvalue, used for PSD checks.
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Factorization of `A + shift·I` for symmetric PSD `A`.
///
/// Cholesky is tried first; if it breaks down (tiny shifts on rank-deficient
/// matrices), the eigendecomposition of `A` is used with clamped eigenvalues.
pub(crate) enum ShiftedSpd {
    Cholesky(Cholesky<f64, Dyn>),
    Eigen {
        values: DVector<f64>,
        vectors: DMatrix<f64>,
        shift: f64,
    },
}

impl ShiftedSpd {
    pub fn new(a: &DMatrix<f64>, shift: f64) -> Result<Self> {
        check_square(a)?;
        let mut shifted = a.clone();
        for i in 0..a.nrows() {
            shifted[(i, i)] += shift;
        }
        match Cholesky::new(shifted) {
            Some(chol) if shift > 0.0 => return Ok(ShiftedSpd::Cholesky(chol)),
            Some(chol) => {
                let l = chol.l_dirty();
                let diag = (0..l.nrows()).map(|i| l[(i, i)]);
                let (lo, hi) = diag.fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
                if lo <= 1e-7 * hi {
                    return Err(Error::Singular);
                }
                return Ok(ShiftedSpd::Cholesky(chol));
            }
            None if shift == 0.0 => return Err(Error::Singular),
            None => {}
        }
        log::debug!("cholesky fallback to eigendecomposition at shift {shift:e}");
        let (values, vectors) = sorted_eigen(a);
        Ok(ShiftedSpd::Eigen {
            values,
            vectors,
            shift,
        })
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            ShiftedSpd::Cholesky(c) => c.solve(b),
            ShiftedSpd::Eigen {
                values,
                vectors,
                shift,
            } => {
                let mut proj = vectors.tr_mul(b);
                for (p, v) in proj.iter_mut().zip(values.iter()) {
                    *p /= v + shift;
                }
                vectors * proj
            }
        }
    }

    /// Squared norms of `(A + shift·I)^{-1/2} x_j` for every column `x_j`.
    pub fn quad_forms(&self, cols: &DMatrix<f64>) -> Vec<f64> {
        match self {
            ShiftedSpd::Cholesky(c) => {
                let z = c
                    .l_dirty()
                    .solve_lower_triangular(cols)
                    .expect("cholesky factor has a nonzero diagonal");
                z.column_iter().map(|col| col.norm_squared()).collect()
            }
            ShiftedSpd::Eigen {
                values,
                vectors,
                shift,
            } => {
                let proj = vectors.tr_mul(cols);
                proj.column_iter()
                    .map(|col| {
                        col.iter()
                            .zip(values.iter())
                            .map(|(p, v)| p * p / (v + shift))
                            .sum()
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_eigen_descends_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        let (vals, vecs) = sorted_eigen(&m);
        assert!(vals[0] >= vals[1] && vals[1] >= vals[2]);
        let rec = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn eigen_fallback_matches_cholesky() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let chol = ShiftedSpd::new(&a, 0.5).unwrap();
        assert!(matches!(chol, ShiftedSpd::Cholesky(_)));
        let (values, vectors) = sorted_eigen(&a);
        let eig = ShiftedSpd::Eigen { values, vectors, shift: 0.5 };
        assert!((chol.solve_vec(&b) - eig.solve_vec(&b)).norm() < 1e-12);
        let cols = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 2.0]);
        for (x, y) in chol.quad_forms(&cols).iter().zip(eig.quad_forms(&cols)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_shift_on_singular_matrix_errors() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(ShiftedSpd::new(&a, 0.0), Err(Error::Singular)));
    }
}
