//! Estimators fitted on a labeling plan: bias-corrected gradient descent, the
//! equivalent analytic weighted ridge solution, the stopping-time schedule,
//! and the SSSL baseline.

use base64::Engine as _;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labeling::{LabelingPlan, Scheme};
use crate::linalg::{check_square, sorted_eigen, symmetrize, ShiftedSpd};
use crate::spectral::{filters_unchecked, SpectrumModel};

/// Ridge used by least-squares fits that only need conditioning.
pub const TINY_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CredGd,
    UniformGd,
    WeightedRidge,
    UniformRidge,
    Sssl,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::CredGd => "cred_gd",
            Method::UniformGd => "uniform_gd",
            Method::WeightedRidge => "weighted_ridge",
            Method::UniformRidge => "uniform_ridge",
            Method::Sssl => "sssl",
        }
    }
}

/// A weight vector in feature space plus how it was obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimator {
    pub w: DVector<f64>,
    pub method: Method,
    /// Step size (0 for closed-form fits).
    pub eta: f64,
    /// Gradient steps (0 for closed-form fits).
    pub iterations: u64,
    /// Ridge regularization (0 for pure gradient descent).
    pub lambda: f64,
    pub plan_ref: Option<String>,
}

impl Estimator {
    /// Attach a plan; uniform plans turn the weighted method tags into their
    /// uniform counterparts.
    pub fn for_plan(mut self, plan: &LabelingPlan) -> Self {
        if plan.scheme == Scheme::Uniform {
            self.method = match self.method {
                Method::CredGd => Method::UniformGd,
                Method::WeightedRidge => Method::UniformRidge,
                m => m,
            };
        }
        self.plan_ref = Some(plan.id());
        self
    }

    pub fn predict(&self, features: &DMatrix<f64>) -> Result<DVector<f64>> {
        predict(self, features)
    }

    pub fn to_json(&self, encoding: WeightEncoding) -> Result<String> {
        let weights = match encoding {
            WeightEncoding::Array => EncodedWeights::Array(self.w.iter().copied().collect()),
            WeightEncoding::Base64 => {
                let bytes: Vec<u8> = self.w.iter().flat_map(|v| v.to_le_bytes()).collect();
                EncodedWeights::Base64(base64::engine::general_purpose::STANDARD.encode(bytes))
            }
        };
        let record = EstimatorRecord {
            method: self.method,
            eta: self.eta,
            iterations: self.iterations,
            lambda: self.lambda,
            plan_ref: self.plan_ref.clone(),
            dim: self.w.len(),
            weights,
        };
        Ok(serde_json::to_string(&record)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let record: EstimatorRecord = serde_json::from_str(s)?;
        let values = match record.weights {
            EncodedWeights::Array(v) => v,
            EncodedWeights::Base64(text) => {
                let bytes = base64::engine::general_purpose::STANDARD
                    .decode(text)
                    .map_err(|e| Error::InvalidArgument(format!("bad base64 weights: {e}")))?;
                if bytes.len() % 8 != 0 {
                    return Err(Error::InvalidArgument("weight bytes not a multiple of 8".into()));
                }
                bytes
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                    .collect()
            }
        };
        if values.len() != record.dim {
            return Err(Error::DimensionMismatch {
                expected: record.dim,
                found: values.len(),
            });
        }
        Ok(Self {
            w: DVector::from_vec(values),
            method: record.method,
            eta: record.eta,
            iterations: record.iterations,
            lambda: record.lambda,
            plan_ref: record.plan_ref,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WeightEncoding {
    #[default]
    Array,
    /// Little-endian f64 bytes, base64 encoded.
    Base64,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EncodedWeights {
    Array(Vec<f64>),
    Base64(String),
}

#[derive(Serialize, Deserialize)]
struct EstimatorRecord {
    method: Method,
    eta: f64,
    iterations: u64,
    lambda: f64,
    plan_ref: Option<String>,
    dim: usize,
    weights: EncodedWeights,
}

/// Weighted moments of the labeled subset:
/// `A = (1/n) Σ w_i φ_i φ_iᵀ`, `b = (1/n) Σ w_i y_i φ_i`.
///
/// `features` and `labels` are pool-level; the plan indexes into them.
pub fn weighted_moments(
    plan: &LabelingPlan,
    features: &DMatrix<f64>,
    labels: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let pool = features.nrows();
    if labels.len() != pool {
        return Err(Error::DimensionMismatch {
            expected: pool,
            found: labels.len(),
        });
    }
    if let Some(&bad) = plan.indices.iter().find(|&&i| i >= pool) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            size: pool,
        });
    }
    let n = plan.n();
    if n == 0 {
        return Err(Error::InvalidArgument("empty labeling plan".into()));
    }
    let d = features.ncols();
    let rows = DMatrix::from_fn(n, d, |i, k| features[(plan.indices[i], k)]);
    let mut weighted = rows.clone();
    let mut b = DVector::zeros(d);
    for (i, (&j, &w)) in plan.indices.iter().zip(&plan.weights).enumerate() {
        weighted.row_mut(i).scale_mut(w);
        b.axpy(w * labels[j], &rows.row(i).transpose(), 1.0);
    }
    let nf = n as f64;
    let mut a = rows.tr_mul(&weighted);
    a /= nf;
    symmetrize(&mut a);
    b /= nf;
    Ok((a, b))
}

fn check_system(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<usize> {
    let d = check_square(a)?;
    if b.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: b.len(),
        });
    }
    Ok(d)
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
fn top_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let d = a.nrows();
    if d == 0 {
        return 0.0;
    }
    let mut v = DVector::from_fn(d, |i, _| 1.0 + (i as f64 * 0.618_033_988_7).fract());
    v.normalize_mut();
    let mut est = 0.0;
    for _ in 0..200 {
        let av = a * &v;
        let norm = av.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&av);
        v = av / norm;
        if (next - est).abs() <= 1e-10 * next.abs() {
            return next;
        }
        est = next;
    }
    est
}

fn check_step(eta: f64, iterations: u64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    if iterations == 0 {
        return Err(Error::InvalidArgument("need at least one gradient step".into()));
    }
    Ok(())
}

/// `T` steps of `g ← g − η(A g − b)` from `g = 0`.
pub fn gd_fit(a: &DMatrix<f64>, b: &DVector<f64>, eta: f64, iterations: u64) -> Result<Estimator> {
    check_system(a, b)?;
    check_step(eta, iterations)?;
    let top = top_eigenvalue(a);
    if eta * top >= 1.0 {
        log::warn!("step size {eta} exceeds the stable range (eta * lambda_max = {:.3})", eta * top);
    }
    let mut g = DVector::zeros(b.len());
    let mut grad = DVector::zeros(b.len());
    for _ in 0..iterations {
        // grad = A g - b
        grad.copy_from(b);
        grad.gemv(1.0, a, &g, -1.0);
        g.axpy(-eta, &grad, 1.0);
    }
    Ok(Estimator {
        w: g,
        method: Method::CredGd,
        eta,
        iterations,
        lambda: 0.0,
        plan_ref: None,
    })
}

/// The same iterate as [`gd_fit`], evaluated in closed form as `p_{T-1}(A) b`
/// through the eigendecomposition of `A`. Cost does not depend on `T`.
pub fn gd_fit_closed_form(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    eta: f64,
    iterations: u64,
) -> Result<Estimator> {
    check_system(a, b)?;
    check_step(eta, iterations)?;
    let (values, vectors) = sorted_eigen(a);
    let mut proj = vectors.tr_mul(b);
    for (p, &x) in proj.iter_mut().zip(values.iter()) {
        *p *= filters_unchecked(eta, iterations - 1, x).0;
    }
    Ok(Estimator {
        w: vectors * proj,
        method: Method::CredGd,
        eta,
        iterations,
        lambda: 0.0,
        plan_ref: None,
    })
}

/// `w = (A + λI)^{-1} b`. `λ = 0` is accepted when `A` is numerically full rank.
pub fn ridge_fit(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> Result<Estimator> {
    check_system(a, b)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge regularization must be nonnegative, got {lambda}"
        )));
    }
    let w = ShiftedSpd::new(a, lambda)?.solve_vec(b);
    Ok(Estimator {
        w,
        method: Method::WeightedRidge,
        eta: 0.0,
        iterations: 0,
        lambda,
        plan_ref: None,
    })
}

/// Inputs to the stopping-time schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub noise_var: f64,
    /// Source norm `R`.
    pub source_norm: f64,
    /// Smoothness exponent `r ∈ (0, 1]`.
    pub smoothness: f64,
    /// Eigenvalue decay exponent `α > 1`.
    pub alpha: f64,
    /// `Tr(Σ^{1/α})`.
    pub trace_alpha: f64,
    pub n_labeled: usize,
    /// Pool size; may be `f64::INFINITY`.
    pub pool_size: f64,
    pub kappa: f64,
    /// Label bound `M`.
    pub label_bound: f64,
}

impl ScheduleParams {
    fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("schedule: {what}")));
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad("noise variance must be finite and nonnegative");
        }
        if !(self.source_norm > 0.0 && self.source_norm.is_finite()) {
            return bad("source norm must be positive");
        }
        if !(self.smoothness > 0.0 && self.smoothness <= 1.0) {
            return bad("smoothness must lie in (0, 1]");
        }
        if !(self.alpha > 1.0 && self.alpha.is_finite()) {
            return bad("decay exponent must exceed 1");
        }
        if !(self.trace_alpha > 0.0 && self.trace_alpha.is_finite()) {
            return bad("trace term must be positive");
        }
        if self.n_labeled == 0 {
            return bad("need at least one labeled point");
        }
        if !(self.pool_size > 0.0) {
            return bad("pool size must be positive");
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return bad("feature bound must be positive");
        }
        if !(self.label_bound > 0.0 && self.label_bound.is_finite()) {
            return bad("label bound must be positive");
        }
        Ok(())
    }

    /// The pool-size correction `λ_N`, which vanishes as the pool grows.
    pub fn lambda_pool(&self) -> f64 {
        let r = self.smoothness;
        let big_n = self.pool_size;
        let n = self.n_labeled as f64;
        let k2 = self.kappa * self.kappa;
        let r2 = self.source_norm * self.source_norm;
        let inner = (k2 * self.noise_var
            + k2 * self.label_bound * self.label_bound / big_n
            + self.kappa.powf(4.0 * r) * r2 / big_n)
            / (n * big_n);
        inner.powf(1.0 / (1.0 + 2.0 * r)) + k2 * r2 / (n * big_n) + self.kappa * self.source_norm / (n.sqrt() * big_n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub lambda_star: f64,
    pub iterations: u64,
}

/// Log factor applied to the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogFactor {
    /// `max(1, ln n)`.
    Default,
    Fixed(f64),
}

/// Regularization level balancing bias and variance, with hidden constants
/// set to 1, and the matching number of gradient steps `⌈1/(η λ*)⌉`.
pub fn lambda_star(params: &ScheduleParams, eta: f64, log_factor: LogFactor) -> Result<Schedule> {
    params.validate()?;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {eta}")));
    }
    let n = params.n_labeled as f64;
    let factor = match log_factor {
        LogFactor::Default => n.ln().max(1.0),
        LogFactor::Fixed(f) => f,
    };
    let a = params.alpha;
    let r = params.smoothness;
    let variance = (params.noise_var * params.trace_alpha / n).powf(a / (2.0 * r * a + 1.0));
    let bias = (params.source_norm * params.source_norm * params.trace_alpha / n).powf(a);
    let lambda_star = factor * (variance + bias + params.lambda_pool());
    Ok(Schedule {
        lambda_star,
        iterations: stopping_time(eta, lambda_star),
    })
}

/// Gradient steps `⌈1/(η λ)⌉` matching a regularization level, at least 1.
pub fn stopping_time(eta: f64, lambda: f64) -> u64 {
    let steps = (1.0 / (eta * lambda)).ceil();
    if steps.is_finite() && steps < u64::MAX as f64 {
        (steps as u64).max(1)
    } else {
        u64::MAX
    }
}

/// Default step size `1 / (2 κ̂²)`.
pub fn default_step_size(kappa_sq: f64) -> f64 {
    0.5 / kappa_sq
}

/// SSSL: least squares on the projections of the labeled features onto the
/// top-`k` eigenvectors of the pool covariance, lifted back to feature space.
pub fn sssl_fit(
    spectrum: &SpectrumModel,
    features: &DMatrix<f64>,
    plan: &LabelingPlan,
    labels: &[f64],
    k: usize,
) -> Result<Estimator> {
    let d = spectrum.dim();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={d}")));
    }
    if features.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: features.ncols(),
        });
    }
    if plan.scheme != Scheme::Uniform {
        return Err(Error::InvalidArgument("SSSL expects a uniform labeling plan".into()));
    }
    let basis = spectrum.eigenvectors.columns(0, k).into_owned();
    let projected = features * &basis;
    let (a, b) = weighted_moments(plan, &projected, labels)?;
    let coef = ShiftedSpd::new(&a, TINY_RIDGE)?.solve_vec(&b);
    Ok(Estimator {
        w: basis * coef,
        method: Method::Sssl,
        eta: 0.0,
        iterations: 0,
        lambda: TINY_RIDGE,
        plan_ref: Some(plan.id()),
    })
}

pub fn predict(est: &Estimator, features: &DMatrix<f64>) -> Result<DVector<f64>> {
    if features.ncols() != est.w.len() {
        return Err(Error::DimensionMismatch {
            expected: est.w.len(),
            found: features.ncols(),
        });
    }
    Ok(features * &est.w)
}

pub fn rmse(est: &Estimator, features: &DMatrix<f64>, labels: &[f64]) -> Result<f64> {
    let pred = predict(est, features)?;
    if labels.len() != pred.len() {
        return Err(Error::DimensionMismatch {
            expected: pred.len(),
            found: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no evaluation points".into()));
    }
    let mse = pred
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / labels.len() as f64;
    Ok(mse.sqrt())
}

/// Excess risk of the population gradient-descent path after `t` steps on a
/// diagonal model: `Σ_i λ_i (1 − ηλ_i)^{2t} θ_i²`.
pub fn ideal_path_bias(eigenvalues: &[f64], theta: &[f64], eta: f64, t: u64) -> f64 {
    eigenvalues
        .iter()
        .zip(theta)
        .map(|(&l, &th)| {
            let r = (1.0 - eta * l).powf(t as f64);
            l * r * r * th * th
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::LabelingDistribution;
    use crate::rng::rng_from_seed;
    use crate::spectral::empirical_covariance;
    use rand::Rng;

    fn random_psd(d: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = rng_from_seed(seed);
        let b = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        let mut a = &b * b.transpose() / d as f64;
        symmetrize(&mut a);
        a
    }

    #[test]
    fn moments_examples() {
        let mut rng = rng_from_seed(1);
        let f = DMatrix::from_fn(6, 3, |_, _| rng.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..6).map(|i| i as f64 * 0.5).collect();
        let (a, b) = weighted_moments(&LabelingPlan::full_pool(6), &f, &y).unwrap();
        let cov = empirical_covariance(&f).unwrap();
        assert!((a - cov.matrix).norm() < 1e-14);
        let b_direct = f.tr_mul(&DVector::from_vec(y.clone())) / 6.0;
        assert!((b - b_direct).norm() < 1e-14);

        let mut plan = LabelingPlan::full_pool(6);
        plan.indices = vec![2];
        plan.weights = vec![1.7];
        let (a1, b1) = weighted_moments(&plan, &f, &y).unwrap();
        let phi = f.row(2).transpose();
        assert!((a1 - 1.7 * &phi * phi.transpose()).norm() < 1e-14);
        assert!((b1 - 1.7 * y[2] * phi).norm() < 1e-14);

        plan.indices = vec![6];
        assert!(matches!(
            weighted_moments(&plan, &f, &y),
            Err(Error::IndexOutOfRange { index: 6, size: 6 })
        ));
    }

    #[test]
    fn moments_two_point_plan() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -1.0, 0.5]);
        let y = [1.0, 3.0];
        let mut plan = LabelingDistribution::cred(&[3.0, 1.0], 1.0).unwrap().draw(4, 0).unwrap();
        plan.indices = vec![0, 1, 1, 0];
        plan.weights = vec![0.8, 4.0 / 3.0, 4.0 / 3.0, 0.8];
        let (a, b) = weighted_moments(&plan, &f, &y).unwrap();
        // (1/4)(2·0.8·φ0φ0ᵀ + 2·(4/3)·φ1φ1ᵀ)
        let expected_a = DMatrix::from_row_slice(
            2,
            2,
            &[
                0.4 * 1.0 + (2.0 / 3.0) * 1.0,
                0.4 * 2.0 + (2.0 / 3.0) * -0.5,
                0.4 * 2.0 + (2.0 / 3.0) * -0.5,
                0.4 * 4.0 + (2.0 / 3.0) * 0.25,
            ],
        );
        let expected_b = DVector::from_vec(vec![
            0.4 * 1.0 + (2.0 / 3.0) * 3.0 * -1.0,
            0.4 * 2.0 + (2.0 / 3.0) * 3.0 * 0.5,
        ]);
        assert!((a - expected_a).norm() < 1e-14);
        assert!((b - expected_b).norm() < 1e-14);
    }

    #[test]
    fn gd_single_step_and_geometric() {
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let a = random_psd(3, 2);
        let g1 = gd_fit(&a, &b, 0.1, 1).unwrap();
        assert!((g1.w - 0.1 * &b).norm() < 1e-15);

        let g = gd_fit(&DMatrix::identity(3, 3), &b, 0.5, 20).unwrap();
        assert!((g.w - (1.0 - 0.5f64.powi(20)) * &b).norm() < 1e-14);

        assert!(gd_fit(&a, &b, 0.0, 5).is_err());
        assert!(gd_fit(&a, &b, 0.1, 0).is_err());
    }

    #[test]
    fn gd_residual_decays_geometrically() {
        let a = random_psd(8, 3) + DMatrix::identity(8, 8) * 0.05;
        let b = DVector::from_fn(8, |i, _| (i as f64).sin());
        let eta = 0.9 / top_eigenvalue(&a);
        let res: Vec<f64> = [50u64, 100, 200]
            .iter()
            .map(|&t| (&a * gd_fit(&a, &b, eta, t).unwrap().w - &b).norm())
            .collect();
        assert!(res[1] < res[0] && res[2] < res[1]);
        assert!(res[2] <= res[1] * res[1] / res[0] * 1.5);
    }

    #[test]
    fn closed_form_matches_loop() {
        for (d, seed, t) in [(5, 1, 1u64), (20, 2, 300), (50, 3, 2000)] {
            let a = random_psd(d, seed);
            let b = DVector::from_fn(d, |i, _| ((i * 7) % 5) as f64 - 2.0);
            let eta = 0.95 / top_eigenvalue(&a);
            let loop_w = gd_fit(&a, &b, eta, t).unwrap().w;
            let closed = gd_fit_closed_form(&a, &b, eta, t).unwrap().w;
            assert!((&loop_w - &closed).norm() <= 1e-8 * loop_w.norm().max(1.0));
        }
    }

    #[test]
    fn ridge_examples() {
        let mut e1 = DVector::zeros(3);
        e1[0] = 1.0;
        let w = ridge_fit(&DMatrix::identity(3, 3), &e1, 1.0).unwrap().w;
        assert!((w - &e1 * 0.5).norm() < 1e-15);
        let z = ridge_fit(&DMatrix::zeros(3, 3), &DVector::zeros(3), 1.0).unwrap().w;
        assert!(z.iter().all(|v| *v == 0.0));
        assert!(matches!(
            ridge_fit(&DMatrix::zeros(3, 3), &e1, 0.0),
            Err(Error::Singular)
        ));
        assert!(ridge_fit(&DMatrix::identity(3, 3), &e1, -1.0).is_err());
    }

    #[test]
    fn ridge_matches_gd_limit() {
        let a = random_psd(6, 9) + DMatrix::identity(6, 6) * 0.2;
        let b = DVector::from_fn(6, |i, _| 1.0 / (i + 1) as f64);
        let exact = ridge_fit(&a, &b, 0.0).unwrap().w;
        let eta = 0.9 / top_eigenvalue(&a);
        let gd = gd_fit(&a, &b, eta, 20_000).unwrap().w;
        assert!((exact - gd).norm() < 1e-6);

        let lambda = 0.3;
        let shifted = &a + DMatrix::identity(6, 6) * lambda;
        let ridge = ridge_fit(&a, &b, lambda).unwrap().w;
        let gd = gd_fit(&shifted, &b, 0.9 / top_eigenvalue(&shifted), 20_000).unwrap().w;
        assert!((ridge - gd).norm() < 1e-6);
    }

    fn base_params() -> ScheduleParams {
        ScheduleParams {
            noise_var: 0.0,
            source_norm: 1.0,
            smoothness: 0.5,
            alpha: 2.0,
            trace_alpha: 1.0,
            n_labeled: 100,
            pool_size: f64::INFINITY,
            kappa: 1.0,
            label_bound: 1.0,
        }
    }

    #[test]
    fn lambda_star_plug_in() {
        let s = lambda_star(&base_params(), 0.5, LogFactor::Fixed(1.0)).unwrap();
        assert!((s.lambda_star - 1e-4).abs() < 1e-18);
        assert_eq!(s.iterations, 20_000);
        let s = lambda_star(&base_params(), 0.5, LogFactor::Default).unwrap();
        assert!((s.lambda_star - 1e-4 * 100f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lambda_star_monotone() {
        let mut prev = 0.0;
        for sigma2 in [0.0, 1e-4, 1e-2, 1.0, 100.0] {
            let p = ScheduleParams { noise_var: sigma2, pool_size: 1e4, ..base_params() };
            let l = lambda_star(&p, 1.0, LogFactor::Default).unwrap().lambda_star;
            assert!(l >= prev);
            prev = l;
        }
        let mut prev = 0.0;
        for r_norm in [0.1, 0.5, 1.0, 2.0] {
            let p = ScheduleParams { source_norm: r_norm, pool_size: 1e4, noise_var: 0.1, ..base_params() };
            let l = lambda_star(&p, 1.0, LogFactor::Fixed(1.0)).unwrap().lambda_star;
            assert!(l >= prev);
            prev = l;
        }
        let mut prev = f64::INFINITY;
        for n in [10, 100, 1000, 10_000] {
            let p = ScheduleParams { n_labeled: n, pool_size: 1e5, noise_var: 0.1, ..base_params() };
            let l = lambda_star(&p, 1.0, LogFactor::Fixed(1.0)).unwrap().lambda_star;
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn lambda_pool_vanishes() {
        let vals: Vec<f64> = [1e3, 1e6, 1e9]
            .iter()
            .map(|&n| ScheduleParams { pool_size: n, noise_var: 1.0, ..base_params() }.lambda_pool())
            .collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
        assert!(vals[2] < 1e-4);
        assert_eq!(base_params().lambda_pool(), 0.0);
    }

    #[test]
    fn lambda_star_rejects_invalid() {
        for p in [
            ScheduleParams { smoothness: 0.0, ..base_params() },
            ScheduleParams { smoothness: 1.5, ..base_params() },
            ScheduleParams { alpha: 1.0, ..base_params() },
            ScheduleParams { noise_var: -1.0, ..base_params() },
            ScheduleParams { n_labeled: 0, ..base_params() },
        ] {
            assert!(lambda_star(&p, 1.0, LogFactor::Default).is_err());
        }
        assert!(lambda_star(&base_params(), 0.0, LogFactor::Default).is_err());
    }

    fn sssl_fixture() -> (DMatrix<f64>, Vec<f64>, LabelingPlan) {
        let mut rng = rng_from_seed(4);
        let f = DMatrix::from_fn(60, 4, |_, j| rng.random_range(-1.0..1.0) * (4 - j) as f64);
        let y: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let plan = LabelingDistribution::uniform(60).unwrap().draw(25, 8).unwrap();
        (f, y, plan)
    }

    #[test]
    fn sssl_full_basis_is_ridge() {
        let (f, y, plan) = sssl_fixture();
        let spectrum = empirical_covariance(&f).unwrap().spectrum();
        let est = sssl_fit(&spectrum, &f, &plan, &y, 4).unwrap();
        let (a, b) = weighted_moments(&plan, &f, &y).unwrap();
        let ridge = ridge_fit(&a, &b, TINY_RIDGE).unwrap();
        assert!((est.w - ridge.w).norm() < 1e-9);
    }

    #[test]
    fn sssl_single_direction() {
        let f = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -2.0, 0.0, 0.5, 0.0, 3.0, 0.0]);
        let spectrum = empirical_covariance(&f).unwrap().spectrum();
        let y = [2.0, -4.0, 1.0, 6.0];
        let plan = LabelingPlan::full_pool(4);
        let est = sssl_fit(&spectrum, &f, &plan, &y, 1).unwrap();
        assert!((est.w[0] - 2.0).abs() < 1e-8);
        assert!(est.w[1].abs() < 1e-12);
    }

    #[test]
    fn sssl_noiseless_in_span_fits_exactly() {
        let (f, _, plan) = sssl_fixture();
        let spectrum = empirical_covariance(&f).unwrap().spectrum();
        let k = 2;
        let w_true = spectrum.eigenvectors.column(0) * 1.5 - spectrum.eigenvectors.column(1) * 0.7;
        let y: Vec<f64> = (&f * &w_true).iter().copied().collect();
        let est = sssl_fit(&spectrum, &f, &plan, &y, k).unwrap();
        let labeled: Vec<usize> = plan.indices.clone();
        for &j in &labeled {
            let pred = f.row(j).dot(&est.w.transpose());
            assert!((pred - y[j]).abs() < 1e-7);
        }
        assert!(sssl_fit(&spectrum, &f, &plan, &y, 0).is_err());
        assert!(sssl_fit(&spectrum, &f, &plan, &y, 5).is_err());
    }

    #[test]
    fn predict_and_rmse() {
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, -1.0, 1.0]);
        let zero = Estimator {
            w: DVector::zeros(2),
            method: Method::UniformRidge,
            eta: 0.0,
            iterations: 0,
            lambda: 1.0,
            plan_ref: None,
        };
        let y = [1.0, -2.0, 2.0];
        assert!((rmse(&zero, &f, &y).unwrap() - 3.0f64.sqrt()).abs() < 1e-15);
        let est = Estimator { w: DVector::from_vec(vec![0.5, -1.0]), ..zero.clone() };
        let exact: Vec<f64> = est.predict(&f).unwrap().iter().copied().collect();
        assert_eq!(rmse(&est, &f, &exact).unwrap(), 0.0);
        assert!(rmse(&est, &DMatrix::zeros(3, 3), &y).is_err());
    }

    #[test]
    fn estimator_json_round_trip() {
        let est = Estimator {
            w: DVector::from_vec(vec![0.1, -2.5, 1e-300, 3.0]),
            method: Method::CredGd,
            eta: 0.25,
            iterations: 40,
            lambda: 0.0,
            plan_ref: Some("cred-n3-s1".into()),
        };
        for enc in [WeightEncoding::Array, WeightEncoding::Base64] {
            let back = Estimator::from_json(&est.to_json(enc).unwrap()).unwrap();
            assert_eq!(back, est);
        }
        assert!(est.to_json(WeightEncoding::Base64).unwrap().contains("base64"));
    }

    #[test]
    fn uniform_plan_retags_methods() {
        let plan = LabelingDistribution::uniform(5).unwrap().draw(2, 0).unwrap();
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(gd_fit(&a, &b, 0.5, 3).unwrap().for_plan(&plan).method, Method::UniformGd);
        assert_eq!(ridge_fit(&a, &b, 0.5).unwrap().for_plan(&plan).method, Method::UniformRidge);
    }
}
