//! Labeling distributions over the unlabeled pool and the draws made from
//! them.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Pool size above which `q` is left out of serialized plans.
pub const PLAN_Q_SERIALIZE_LIMIT: usize = 10_000;
/// Largest pool accepted by [`expected_moments`].
pub const ENUMERATION_LIMIT: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Cred,
    Uniform,
    /// Caller-supplied distribution (tests, ablations).
    Custom,
}

/// A validated probability vector over the pool together with how it was made.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelingDistribution {
    pub q: Vec<f64>,
    pub scheme: Scheme,
    /// Regularization used for the contribution ratios (0 when unused).
    pub lambda_q: f64,
}

impl LabelingDistribution {
    pub fn uniform(pool_size: usize) -> Result<Self> {
        if pool_size == 0 {
            return Err(Error::InvalidDistribution("empty pool".into()));
        }
        Ok(Self {
            q: vec![1.0 / pool_size as f64; pool_size],
            scheme: Scheme::Uniform,
            lambda_q: 0.0,
        })
    }

    /// CRED distribution from precomputed contribution ratios.
    pub fn cred(scores: &[f64], lambda_q: f64) -> Result<Self> {
        Ok(Self {
            q: cred_distribution(scores)?,
            scheme: Scheme::Cred,
            lambda_q,
        })
    }

    pub fn custom(q: Vec<f64>) -> Result<Self> {
        validate_q(&q)?;
        Ok(Self {
            q,
            scheme: Scheme::Custom,
            lambda_q: 0.0,
        })
    }

    pub fn pool_size(&self) -> usize {
        self.q.len()
    }

    /// Draw `n` pool indices independently (with replacement).
    pub fn draw(&self, n: usize, seed: u64) -> Result<LabelingPlan> {
        draw_labels(self, n, seed)
    }
}

/// `q_j = (ℓ_j + mean(ℓ)) / (2 Σ ℓ)`.
pub fn cred_distribution(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::InvalidDistribution("empty score vector".into()));
    }
    if let Some(bad) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "contribution ratios must be finite and nonnegative, found {bad}"
        )));
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Err(Error::DegenerateScores);
    }
    let mean = total / scores.len() as f64;
    let denom = 2.0 * total;
    Ok(scores.iter().map(|s| (s + mean) / denom).collect())
}

fn validate_q(q: &[f64]) -> Result<()> {
    if q.is_empty() {
        return Err(Error::InvalidDistribution("empty probability vector".into()));
    }
    if let Some(bad) = q.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("entry {bad} is not a probability")));
    }
    let sum: f64 = q.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(())
}

fn skip_large_q(q: &Option<Vec<f64>>) -> bool {
    q.as_ref().is_none_or(|q| q.len() > PLAN_Q_SERIALIZE_LIMIT)
}

/// The labeled subset: drawn indices and their bias-correction weights
/// `1 / (N q_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingPlan {
    pub scheme: Scheme,
    pub pool_size: usize,
    pub lambda_q: f64,
    pub seed: u64,
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "skip_large_q")]
    pub q: Option<Vec<f64>>,
}

impl LabelingPlan {
    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// Short identifier recorded on estimators.
    pub fn id(&self) -> String {
        let scheme = match self.scheme {
            Scheme::Cred => "cred",
            Scheme::Uniform => "uniform",
            Scheme::Custom => "custom",
        };
        format!("{scheme}-n{}-s{:016x}", self.n(), self.seed)
    }

    /// A plan that labels every pool point exactly once with unit weight.
    pub fn full_pool(pool_size: usize) -> Self {
        Self {
            scheme: Scheme::Uniform,
            pool_size,
            lambda_q: 0.0,
            seed: 0,
            indices: (0..pool_size).collect(),
            weights: vec![1.0; pool_size],
            q: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

pub fn draw_labels(dist: &LabelingDistribution, n: usize, seed: u64) -> Result<LabelingPlan> {
    if n == 0 {
        return Err(Error::InvalidArgument("must label at least one point".into()));
    }
    validate_q(&dist.q)?;
    let pool = dist.q.len();
    let mut rng = rng_from_seed(seed);
    let (indices, weights) = match dist.scheme {
        Scheme::Uniform => {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..pool)).collect();
            (idx, vec![1.0; n])
        }
        Scheme::Cred | Scheme::Custom => {
            let sampler = WeightedIndex::new(&dist.q)
                .map_err(|e| Error::InvalidDistribution(e.to_string()))?;
            let idx: Vec<usize> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
            let nf = pool as f64;
            let w = idx.iter().map(|&j| 1.0 / (nf * dist.q[j])).collect();
            (idx, w)
        }
    };
    Ok(LabelingPlan {
        scheme: dist.scheme,
        pool_size: pool,
        lambda_q: dist.lambda_q,
        seed,
        indices,
        weights,
        q: Some(dist.q.clone()),
    })
}

/// Exact expectation of the weighted moments `A`, `b` under a single draw
/// from `q`, by enumeration over the pool. Zero-probability points are never
/// drawn and contribute nothing.
pub fn expected_moments(
    q: &[f64],
    features: &DMatrix<f64>,
    labels: &[f64],
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = q.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::SizeGuard {
            size: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    validate_q(q)?;
    if features.nrows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: features.nrows(),
        });
    }
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    let d = features.ncols();
    let nf = n as f64;
    let mut a = DMatrix::zeros(d, d);
    let mut b = DVector::zeros(d);
    for (j, &qj) in q.iter().enumerate() {
        if qj == 0.0 {
            continue;
        }
        let coef = qj * (1.0 / (nf * qj));
        let phi = features.row(j).transpose();
        a.ger(coef, &phi, &phi, 1.0);
        b.axpy(coef * labels[j], &phi, 1.0);
    }
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cred_examples() {
        assert_eq!(cred_distribution(&[1.0, 1.0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(cred_distribution(&[3.0, 1.0]).unwrap(), vec![5.0 / 8.0, 3.0 / 8.0]);
        for c in [1e-9, 0.3, 7.0, 1e6] {
            let q = cred_distribution(&[c; 13]).unwrap();
            assert!(q.iter().all(|p| (p - 1.0 / 13.0).abs() < 1e-16));
        }
    }

    #[test]
    fn cred_rejects_degenerate_and_invalid() {
        assert!(matches!(cred_distribution(&[0.0, 0.0]), Err(Error::DegenerateScores)));
        assert!(cred_distribution(&[]).is_err());
        assert!(cred_distribution(&[1.0, -1.0]).is_err());
        assert!(cred_distribution(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn point_mass_draw() {
        let mut q = vec![0.0; 4];
        q[0] = 1.0;
        let plan = LabelingDistribution::custom(q).unwrap().draw(5, 9).unwrap();
        assert_eq!(plan.indices, vec![0; 5]);
        assert!(plan.weights.iter().all(|w| *w == 0.25));
    }

    #[test]
    fn uniform_weights_are_exactly_one() {
        let plan = LabelingDistribution::uniform(7).unwrap().draw(50, 1).unwrap();
        assert!(plan.weights.iter().all(|w| *w == 1.0));
        assert!(plan.indices.iter().all(|&i| i < 7));
        assert_eq!(plan.n(), 50);
    }

    #[test]
    fn two_point_weights() {
        let dist = LabelingDistribution::cred(&[3.0, 1.0], 1.0).unwrap();
        let plan = dist.draw(200, 4).unwrap();
        for (&j, &w) in plan.indices.iter().zip(&plan.weights) {
            let expected = if j == 0 { 0.8 } else { 4.0 / 3.0 };
            assert!((w - expected).abs() < 1e-15);
        }
        assert!(plan.indices.contains(&0) && plan.indices.contains(&1));
    }

    #[test]
    fn draws_are_deterministic() {
        let dist = LabelingDistribution::cred(&[0.1, 2.0, 0.5, 0.0], 0.1).unwrap();
        assert_eq!(dist.draw(30, 77).unwrap(), dist.draw(30, 77).unwrap());
        assert_ne!(dist.draw(30, 77).unwrap().indices, dist.draw(30, 78).unwrap().indices);
    }

    #[test]
    fn invalid_q_rejected() {
        assert!(LabelingDistribution::custom(vec![0.5, 0.4]).is_err());
        assert!(LabelingDistribution::custom(vec![1.5, -0.5]).is_err());
        let bad = LabelingDistribution { q: vec![0.2, 0.2], scheme: Scheme::Cred, lambda_q: 1.0 };
        assert!(draw_labels(&bad, 3, 0).is_err());
        assert!(LabelingDistribution::uniform(3).unwrap().draw(0, 0).is_err());
    }

    #[test]
    fn expected_moments_examples() {
        let s = 2f64.sqrt();
        let f = DMatrix::from_row_slice(2, 2, &[s, 0.0, 0.0, s]);
        let y = [0.3, -1.2];
        let (a_u, b_u) = expected_moments(&[0.5, 0.5], &f, &y).unwrap();
        let (a_c, b_c) = expected_moments(&cred_distribution(&[3.0, 1.0]).unwrap(), &f, &y).unwrap();
        assert!((a_u - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        assert!((&a_c - DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        assert!((b_u - &b_c).norm() < 1e-15);
        assert!((b_c[0] - 0.5 * 0.3 * s).abs() < 1e-15);
        assert!(expected_moments(&vec![1.0 / 2001.0; 2001], &DMatrix::zeros(2001, 1), &[0.0; 2001]).is_err());
    }

    #[test]
    fn plan_json_omits_large_q() {
        let small = LabelingDistribution::uniform(10).unwrap().draw(3, 0).unwrap();
        assert!(small.to_json().unwrap().contains("\"q\""));
        let large = LabelingDistribution::uniform(PLAN_Q_SERIALIZE_LIMIT + 1).unwrap().draw(3, 0).unwrap();
        let json = large.to_json().unwrap();
        assert!(!json.contains("\"q\""));
        let back: LabelingPlan = serde_json::from_str(&json).unwrap();
        assert_eq!(back.indices, large.indices);
        assert!(back.q.is_none());
    }
}
