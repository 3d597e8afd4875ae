//! Synthetic pools, target functions and noisy labels.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::SpectrumModel;

/// Default leading variance of the truncated-normal power-law model.
pub const DEFAULT_SIGMA1_SQ: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// Two independent Gaussians with variances 1 and 0.01.
    Gauss2d,
    /// Independent `N(0, σ_i²)` conditioned on `[-1, 1]`, `σ_i² = σ₁² i^{-α}`.
    TruncatedNormalProduct,
    /// Independent `N(0, σ₁² i^{-α})`, no truncation; exact diagonal spectrum.
    DiagonalPowerLaw,
}

/// Description of a synthetic input distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub kind: SyntheticKind,
    pub dim: usize,
    pub alpha: f64,
    pub sigma1_sq: f64,
}

impl SyntheticModel {
    pub fn gauss2d() -> Self {
        Self {
            kind: SyntheticKind::Gauss2d,
            dim: 2,
            alpha: 0.0,
            sigma1_sq: 1.0,
        }
    }

    pub fn power_law(kind: SyntheticKind, dim: usize, alpha: f64, sigma1_sq: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if !(sigma1_sq > 0.0 && alpha >= 0.0) {
            return Err(Error::InvalidArgument(
                "power-law model needs sigma1_sq > 0 and alpha >= 0".into(),
            ));
        }
        Ok(Self {
            kind,
            dim,
            alpha,
            sigma1_sq,
        })
    }

    /// Per-coordinate variances before truncation.
    pub fn base_variances(&self) -> Vec<f64> {
        match self.kind {
            SyntheticKind::Gauss2d => vec![1.0, 0.01],
            _ => power_law_variances(self.dim, self.alpha, self.sigma1_sq),
        }
    }

    /// Exact population covariance eigenvalues (diagonal models).
    pub fn population_eigenvalues(&self) -> Vec<f64> {
        match self.kind {
            SyntheticKind::TruncatedNormalProduct => self
                .base_variances()
                .into_iter()
                .map(truncated_normal_variance)
                .collect(),
            _ => self.base_variances(),
        }
    }

    pub fn population_spectrum(&self) -> Result<SpectrumModel> {
        SpectrumModel::diagonal(&self.population_eigenvalues())
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<DMatrix<f64>> {
        match self.kind {
            SyntheticKind::Gauss2d => sample_gauss2d(n, seed),
            SyntheticKind::TruncatedNormalProduct => {
                sample_truncnorm_product(n, &self.base_variances(), seed)
            }
            SyntheticKind::DiagonalPowerLaw => sample_gaussian_product(n, &self.base_variances(), seed),
        }
    }
}

/// `σ_i² = σ₁² i^{-α}` for `i = 1..=d`.
pub fn power_law_variances(dim: usize, alpha: f64, sigma1_sq: f64) -> Vec<f64> {
    (1..=dim).map(|i| sigma1_sq * (i as f64).powf(-alpha)).collect()
}

fn sample_gaussian_product(n: usize, variances: &[f64], seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("variances must be positive".into()));
    }
    let stds: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::zeros(n, stds.len());
    for i in 0..n {
        for (j, s) in stds.iter().enumerate() {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[(i, j)] = s * z;
        }
    }
    Ok(x)
}

/// Rows of `(X₁, X₂)` with `X₁ ~ N(0, 1)`, `X₂ ~ N(0, 0.01)` independent.
pub fn sample_gauss2d(n: usize, seed: u64) -> Result<DMatrix<f64>> {
    sample_gaussian_product(n, &[1.0, 0.01], seed)
}

/// Product of truncated normals on `[-1, 1]` by per-coordinate rejection.
pub fn sample_truncnorm_product(n: usize, variances: &[f64], seed: u64) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be positive".into()));
    }
    let dists = variances
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Normal::new(0.0, v.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))
            } else {
                Err(Error::InvalidArgument(format!("variance {v} must be positive")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng_from_seed(seed);
    let mut x = DMatrix::zeros(n, dists.len());
    for i in 0..n {
        for (j, dist) in dists.iter().enumerate() {
            let v = loop {
                let z = dist.sample(&mut rng);
                if (-1.0..=1.0).contains(&z) {
                    break z;
                }
            };
            x[(i, j)] = v;
        }
    }
    assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)), "truncated sample left [-1, 1]");
    Ok(x)
}

/// Variance of `N(0, σ²)` conditioned on `[-1, 1]`.
pub fn truncated_normal_variance(sigma_sq: f64) -> f64 {
    let sigma = sigma_sq.sqrt();
    let a = 1.0 / sigma;
    let pdf = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = erf(a / std::f64::consts::SQRT_2);
    sigma_sq * (1.0 - 2.0 * a * pdf / mass)
}

/// How regression coefficients are built from a covariance eigen-system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetKind {
    /// `θ = Σ_i a_i e_i / √λ_i`: each eigen-direction carries unit variance.
    Whitened,
    /// `θ = Σ_i λ_i^{r - 1/2} a_i e_i`, realizing `f* = L^r φ` with `φ`
    /// having coefficients `a_i` in the L² eigenbasis.
    Source { r: f64 },
}

/// Draw `a_i ~ N(0, 1)` and build coefficients over the leading `directions`
/// eigenvectors (all positive eigenvalues when `None`).
pub fn make_target(
    spectrum: &SpectrumModel,
    kind: TargetKind,
    directions: Option<usize>,
    seed: u64,
) -> Result<DVector<f64>> {
    let d = spectrum.dim();
    let used = match directions {
        Some(k) if k > d => {
            return Err(Error::InvalidArgument(format!("{k} directions requested, dimension {d}")))
        }
        Some(k) => k,
        None => spectrum.rank(),
    };
    if used == 0 {
        return Err(Error::InvalidArgument("spectrum has no positive eigenvalue".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut theta = DVector::zeros(d);
    for i in 0..used {
        let lambda = spectrum.eigenvalues[i];
        if lambda <= 0.0 {
            return Err(Error::ZeroEigenvalue { index: i });
        }
        let a: f64 = StandardNormal.sample(&mut rng);
        let scale = match kind {
            TargetKind::Whitened => 1.0 / lambda.sqrt(),
            TargetKind::Source { r } => lambda.powf(r - 0.5),
        };
        theta.axpy(a * scale, &spectrum.eigenvectors.column(i), 1.0);
    }
    Ok(theta)
}

/// `y = F θ + ε`, `ε ~ N(0, σ²)` i.i.d.
pub fn labels(features: &DMatrix<f64>, theta: &DVector<f64>, noise_var: f64, seed: u64) -> Result<Vec<f64>> {
    if features.ncols() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            found: features.ncols(),
        });
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise variance {noise_var} must be >= 0")));
    }
    let clean = features * theta;
    if noise_var == 0.0 {
        return Ok(clean.iter().copied().collect());
    }
    let sd = noise_var.sqrt();
    let mut rng = rng_from_seed(derive_seed(seed, &[0x6e6f_6973_65]));
    Ok(clean
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + sd * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{empirical_covariance, fit_decay_exponent};

    fn col_var(x: &DMatrix<f64>, j: usize) -> f64 {
        let c = x.column(j);
        let m = c.mean();
        c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (c.len() as f64 - 1.0)
    }

    #[test]
    fn gauss2d_moments() {
        let x = sample_gauss2d(100_000, 1).unwrap();
        let v1 = col_var(&x, 0);
        let v2 = col_var(&x, 1);
        assert!((0.97..=1.03).contains(&v1), "{v1}");
        assert!((0.0097..=0.0103).contains(&v2), "{v2}");
        let m1 = x.column(0).mean();
        let m2 = x.column(1).mean();
        let cov: f64 = x.row_iter().map(|r| (r[0] - m1) * (r[1] - m2)).sum::<f64>() / 99_999.0;
        assert!((cov / (v1 * v2).sqrt()).abs() <= 0.02);
        assert_eq!(x, sample_gauss2d(100_000, 1).unwrap());
        assert!(sample_gauss2d(0, 1).is_err());
    }

    #[test]
    fn truncnorm_support_and_decay() {
        let vars = power_law_variances(50, 2.0, 0.25);
        let x = sample_truncnorm_product(100_000, &vars, 3).unwrap();
        assert!(x.iter().all(|v| (-1.0..=1.0).contains(v)));
        let spectrum = empirical_covariance(&x).unwrap().spectrum();
        let vals: Vec<f64> = spectrum.eigenvalues.iter().copied().collect();
        let alpha = fit_decay_exponent(&vals).unwrap();
        assert!((alpha - 2.0).abs() <= 0.15, "fitted {alpha}");
    }

    #[test]
    fn truncated_variance_below_base() {
        for s2 in [0.5, 1.0, 4.0] {
            let analytic = truncated_normal_variance(s2);
            assert!(analytic < s2);
            let x = sample_truncnorm_product(200_000, &[s2], 9).unwrap();
            let mc = x.column(0).iter().map(|v| v * v).sum::<f64>() / 200_000.0;
            assert!((mc - analytic).abs() < 0.01 * analytic + 2e-3, "{mc} vs {analytic}");
        }
        // light truncation leaves small variances nearly unchanged
        assert!((truncated_normal_variance(0.01) - 0.01).abs() < 1e-12);
    }

    #[test]
    fn gauss2d_fixed_target_labels() {
        let x = sample_gauss2d(10, 2).unwrap();
        let theta = DVector::from_vec(vec![1.0, 1.0]);
        let y = labels(&x, &theta, 0.0, 5).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert_eq!(*yi, x[(i, 0)] + x[(i, 1)]);
        }
        assert_eq!(y, labels(&x, &theta, 0.0, 99).unwrap());
        let noisy = labels(&x, &theta, 0.01, 5).unwrap();
        assert_eq!(noisy, labels(&x, &theta, 0.01, 5).unwrap());
        assert_ne!(noisy, y);
    }

    #[test]
    fn whitened_target_has_unit_variance_per_direction() {
        let spectrum = SpectrumModel::diagonal(&[4.0, 1.0, 0.25, 0.01, 1e-4]).unwrap();
        let sigma = spectrum.reconstruct();
        let mean: f64 = (0..200)
            .map(|s| {
                let th = make_target(&spectrum, TargetKind::Whitened, None, s).unwrap();
                (th.transpose() * &sigma * &th)[0]
            })
            .sum::<f64>()
            / 200.0;
        assert!((mean - 5.0).abs() < 0.75, "{mean}");
    }

    #[test]
    fn source_target_scaling() {
        let spectrum = SpectrumModel::diagonal(&[1.0, 0.25]).unwrap();
        let a = make_target(&spectrum, TargetKind::Whitened, None, 4).unwrap();
        let b = make_target(&spectrum, TargetKind::Source { r: 0.5 }, None, 4).unwrap();
        // same a_i draws; whitened divides by sqrt(λ), r = 1/2 leaves a_i as is
        assert!((a[0] - b[0]).abs() < 1e-15);
        assert!((a[1] - 2.0 * b[1]).abs() < 1e-15);
    }

    #[test]
    fn target_rejects_zero_eigenvalue_direction() {
        let spectrum = SpectrumModel::diagonal(&[1.0, 0.0]).unwrap();
        assert!(make_target(&spectrum, TargetKind::Whitened, None, 0).is_ok());
        assert!(matches!(
            make_target(&spectrum, TargetKind::Whitened, Some(2), 0),
            Err(Error::ZeroEigenvalue { index: 1 })
        ));
    }

    #[test]
    fn population_spectrum_of_power_law() {
        let m = SyntheticModel::power_law(SyntheticKind::DiagonalPowerLaw, 4, 2.0, 1.0).unwrap();
        let spectrum = m.population_spectrum().unwrap();
        assert_eq!(spectrum.eigenvalues.as_slice(), &[1.0, 0.25, 1.0 / 9.0, 1.0 / 16.0]);
        let t = SyntheticModel::power_law(SyntheticKind::TruncatedNormalProduct, 4, 2.0, 0.25).unwrap();
        for (p, b) in t.population_eigenvalues().iter().zip(t.base_variances()) {
            assert!(*p <= b && *p > 0.7 * b);
        }
    }
}
