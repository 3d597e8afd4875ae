//! Covariance spectra, ridge leverage scores (contribution ratios to the
//! effective dimension), the effective dimension itself, its sup-norm
//! counterpart, their upper bounds, and the gradient-descent spectral filters.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::max_sq_norm;
use crate::linalg::{check_square, min_eigenvalue, sorted_eigen, symmetrize, ShiftedSpd};

/// Largest pool the dense Gram-path leverage computation accepts.
pub const GRAM_SIZE_LIMIT: usize = 20_000;

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveLambda(lambda))
    }
}

/// Second-moment operator in feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub feature_dim: usize,
    pub matrix: DMatrix<f64>,
    /// Number of points averaged; 0 for analytic population models.
    pub n_samples: usize,
}

impl CovarianceModel {
    /// A population covariance given directly. Must be symmetric PSD.
    pub fn population(matrix: DMatrix<f64>) -> Result<Self> {
        let d = check_square(&matrix)?;
        let scale = matrix.norm().max(f64::MIN_POSITIVE);
        if (&matrix - matrix.transpose()).norm() > 1e-12 * scale {
            return Err(Error::InvalidArgument("covariance is not symmetric".into()));
        }
        let min_ev = min_eigenvalue(&matrix);
        if min_ev < -1e-10 * scale {
            return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_ev });
        }
        Ok(Self {
            feature_dim: d,
            matrix,
            n_samples: 0,
        })
    }

    pub fn spectrum(&self) -> SpectrumModel {
        SpectrumModel::from_covariance(self)
    }
}

/// `(1/N) Fᵀ F` for a feature matrix with one row per point.
pub fn empirical_covariance(features: &DMatrix<f64>) -> Result<CovarianceModel> {
    let n = features.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("empty feature matrix".into()));
    }
    let mut matrix = features.tr_mul(features);
    matrix /= n as f64;
    symmetrize(&mut matrix);
    Ok(CovarianceModel {
        feature_dim: features.ncols(),
        matrix,
        n_samples: n,
    })
}

/// Eigen-system of a covariance, eigenvalues descending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub eigenvalues: DVector<f64>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectrumModel {
    pub fn from_covariance(cov: &CovarianceModel) -> Self {
        let (eigenvalues, eigenvectors) = sorted_eigen(&cov.matrix);
        Self {
            eigenvalues,
            eigenvectors,
        }
    }

    /// Diagonal spectrum with the standard basis as eigenvectors. Values are
    /// sorted descending (with the basis permuted accordingly).
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidArgument(
                "eigenvalues must be finite and nonnegative".into(),
            ));
        }
        let d = values.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        Ok(Self {
            eigenvalues: DVector::from_iterator(d, order.iter().map(|&i| values[i])),
            eigenvectors: DMatrix::from_fn(d, d, |r, c| if r == order[c] { 1.0 } else { 0.0 }),
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.eigenvectors * DMatrix::from_diagonal(&self.eigenvalues) * self.eigenvectors.transpose()
    }

    /// `Tr(Σ^p)` over the positive eigenvalues.
    pub fn trace_power(&self, p: f64) -> f64 {
        self.eigenvalues
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| v.powf(p))
            .sum()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|v| **v > 0.0).count()
    }
}

/// Ridge leverage scores `φ_jᵀ (Σ + λI)^{-1} φ_j` for every row of `features`.
pub fn leverage_scores(
    cov: &CovarianceModel,
    features: &DMatrix<f64>,
    lambda: f64,
) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    if features.ncols() != cov.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: cov.feature_dim,
            found: features.ncols(),
        });
    }
    let solver = ShiftedSpd::new(&cov.matrix, lambda)?;
    Ok(solver.quad_forms(&features.transpose()))
}

/// Leverage scores from the pool Gram matrix `G = F Fᵀ` alone.
///
/// Uses `F (FᵀF/N + λI)^{-1} Fᵀ = N·G (G + NλI)^{-1}`, evaluated through the
/// eigendecomposition of `G`.
pub fn leverage_scores_gram(gram: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>> {
    check_lambda(lambda)?;
    let n = check_square(gram)?;
    if n > GRAM_SIZE_LIMIT {
        return Err(Error::SizeGuard {
            size: n,
            limit: GRAM_SIZE_LIMIT,
        });
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scale = gram.norm().max(f64::MIN_POSITIVE);
    if (gram - gram.transpose()).norm() > 1e-12 * scale {
        return Err(Error::InvalidArgument("gram matrix is not symmetric".into()));
    }
    let eig = nalgebra::SymmetricEigen::new(gram.clone());
    let min_ev = eig.eigenvalues.min();
    if min_ev < -1e-10 * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_ev });
    }
    let nf = n as f64;
    let shrink: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&mu| {
            let mu = mu.max(0.0);
            nf * mu / (mu + nf * lambda)
        })
        .collect();
    Ok((0..n)
        .map(|j| {
            eig.eigenvectors
                .row(j)
                .iter()
                .zip(&shrink)
                .map(|(v, s)| v * v * s)
                .sum()
        })
        .collect())
}

/// Leverage scores for many regularization levels at once, reusing one
/// eigendecomposition of the covariance.
#[derive(Debug, Clone)]
pub struct LeverageProfile {
    eigenvalues: DVector<f64>,
    /// Squared projections of each point onto each eigenvector (N × d).
    sq_proj: DMatrix<f64>,
}

impl LeverageProfile {
    pub fn new(spectrum: &SpectrumModel, features: &DMatrix<f64>) -> Result<Self> {
        if features.ncols() != spectrum.dim() {
            return Err(Error::DimensionMismatch {
                expected: spectrum.dim(),
                found: features.ncols(),
            });
        }
        let mut sq_proj = features * &spectrum.eigenvectors;
        sq_proj.apply(|v| *v *= *v);
        Ok(Self {
            eigenvalues: spectrum.eigenvalues.clone(),
            sq_proj,
        })
    }

    pub fn scores(&self, lambda: f64) -> Result<Vec<f64>> {
        check_lambda(lambda)?;
        let inv = self.eigenvalues.map(|v| 1.0 / (v + lambda));
        Ok((&self.sq_proj * inv).iter().copied().collect())
    }
}

/// `N∞(λ) = Σ_i λ_i / (λ_i + λ)`.
pub fn effective_dimension(spectrum: &SpectrumModel, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(spectrum
        .eigenvalues
        .iter()
        .map(|&v| v / (v + lambda))
        .sum())
}

/// Pool maximum of the leverage scores, the empirical stand-in for `F∞(λ)`.
pub fn sup_leverage(cov: &CovarianceModel, features: &DMatrix<f64>, lambda: f64) -> Result<f64> {
    Ok(leverage_scores(cov, features, lambda)?
        .into_iter()
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryBounds {
    /// `Tr(Σ^{1/α}) λ^{-1/α}`.
    pub effective_dimension: f64,
    /// `κ² / λ`.
    pub sup_leverage: f64,
}

/// Upper bounds on `N∞(λ)` and `F∞(λ)`. `kappa_sq` is the squared feature
/// bound; pass [`max_sq_norm`] of the pool for the empirical version.
pub fn theory_bounds(
    spectrum: &SpectrumModel,
    lambda: f64,
    alpha: f64,
    kappa_sq: f64,
) -> Result<TheoryBounds> {
    check_lambda(lambda)?;
    if !(alpha > 1.0) {
        return Err(Error::InvalidArgument(format!(
            "decay exponent must exceed 1, got {alpha}"
        )));
    }
    Ok(TheoryBounds {
        effective_dimension: spectrum.trace_power(1.0 / alpha) * lambda.powf(-1.0 / alpha),
        sup_leverage: kappa_sq / lambda,
    })
}

/// Convenience wrapper using the pool's largest squared feature norm.
pub fn theory_bounds_for_pool(
    spectrum: &SpectrumModel,
    features: &DMatrix<f64>,
    lambda: f64,
    alpha: f64,
) -> Result<TheoryBounds> {
    theory_bounds(spectrum, lambda, alpha, max_sq_norm(features))
}

/// Least-squares slope fit of `log λ_i` against `log i`, returned as the
/// decay exponent `α = -slope`. Diagnostic only.
pub fn fit_decay_exponent(eigenvalues: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.0)
        .map(|(i, v)| (((i + 1) as f64).ln(), v.ln()))
        .collect();
    log_log_slope(&pts).map(|s| -s)
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Gradient-descent filters after `t` steps with step size `eta`:
/// `p_t(x) = η Σ_{k=0}^{t} (1-ηx)^k` and `r_t(x) = 1 - x p_t(x) = (1-ηx)^{t+1}`.
pub fn spectral_filters(eta: f64, t: u64, x: f64) -> Result<(f64, f64)> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    if !(x >= 0.0 && eta * x < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "filter argument {x} outside [0, 1/eta)"
        )));
    }
    Ok(filters_unchecked(eta, t, x))
}

pub(crate) fn filters_unchecked(eta: f64, t: u64, x: f64) -> (f64, f64) {
    let steps = t as f64 + 1.0;
    if x == 0.0 {
        return (eta * steps, 1.0);
    }
    let base = 1.0 - eta * x;
    if base > 0.0 {
        // (1-ηx)^{t+1} via exp/ln1p to keep p_t accurate for small ηx
        let log_r = steps * (-eta * x).ln_1p();
        (-log_r.exp_m1() / x, log_r.exp())
    } else {
        let r = base.powf(steps);
        ((1.0 - r) / x, r)
    }
}
