//! Explicit feature maps: linear (with optional bias), Gaussian random Fourier
//! features, and a frozen random ReLU network.
//!
//! The kernel of a map is the inner product of its features, so every
//! downstream computation (covariance, leverage scores, regression) works in
//! the explicit feature space.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Linear,
    RffGaussian,
    ReluNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureHyperparams {
    /// Append a constant 1 coordinate to linear features.
    pub linear_bias: bool,
    /// Gaussian kernel bandwidth `s` in `exp(-|x - x'|^2 / (2 s^2))`.
    pub bandwidth: f64,
    /// Hidden width of the ReLU network.
    pub relu_width: usize,
    pub relu_layers: usize,
    /// Add standard-normal bias vectors to each hidden layer.
    pub relu_bias: bool,
    /// Scale pre-activations by `1/sqrt(fan_in)`.
    pub relu_fan_in_scaling: bool,
}

impl Default for FeatureHyperparams {
    fn default() -> Self {
        Self {
            linear_bias: true,
            bandwidth: 1.0,
            relu_width: 500,
            relu_layers: 3,
            relu_bias: false,
            relu_fan_in_scaling: false,
        }
    }
}

#[derive(Debug, Clone)]
enum Params {
    Linear { bias: bool },
    /// One row per frequency; the map has two features (cos, sin) per row.
    Rff { frequencies: DMatrix<f64> },
    Relu {
        weights: Vec<DMatrix<f64>>,
        biases: Option<Vec<DVector<f64>>>,
        fan_in_scaling: bool,
    },
}

/// A frozen feature map. Parameters are drawn once at construction.
#[derive(Debug, Clone)]
pub struct FeatureMap {
    kind: FeatureKind,
    input_dim: usize,
    feature_dim: usize,
    seed: u64,
    params: Params,
}

impl FeatureMap {
    /// Build a map of the given kind.
    ///
    /// `feature_dim` is ignored for the linear kind (it is `input_dim`, plus
    /// one with a bias coordinate) and for the ReLU kind must equal the hidden
    /// width.
    pub fn build(
        kind: FeatureKind,
        input_dim: usize,
        feature_dim: usize,
        hyper: &FeatureHyperparams,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidArgument("input_dim must be at least 1".into()));
        }
        let mut rng = rng_from_seed(seed);
        let (feature_dim, params) = match kind {
            FeatureKind::Linear => {
                let dim = input_dim + usize::from(hyper.linear_bias);
                (dim, Params::Linear { bias: hyper.linear_bias })
            }
            FeatureKind::RffGaussian => {
                if feature_dim == 0 || feature_dim % 2 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "random Fourier features need an even positive feature_dim, got {feature_dim}"
                    )));
                }
                if !(hyper.bandwidth > 0.0 && hyper.bandwidth.is_finite()) {
                    return Err(Error::InvalidArgument(format!(
                        "bandwidth must be positive, got {}",
                        hyper.bandwidth
                    )));
                }
                let inv_bw = 1.0 / hyper.bandwidth;
                let frequencies = DMatrix::from_fn(feature_dim / 2, input_dim, |_, _| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z * inv_bw
                });
                (feature_dim, Params::Rff { frequencies })
            }
            FeatureKind::ReluNet => {
                let width = hyper.relu_width;
                if width == 0 || hyper.relu_layers == 0 {
                    return Err(Error::InvalidArgument(
                        "relu network needs positive width and depth".into(),
                    ));
                }
                if feature_dim != width {
                    return Err(Error::InvalidArgument(format!(
                        "relu feature_dim {feature_dim} must equal the hidden width {width}"
                    )));
                }
                let mut weights = Vec::with_capacity(hyper.relu_layers);
                let mut fan_in = input_dim;
                for _ in 0..hyper.relu_layers {
                    weights.push(DMatrix::from_fn(width, fan_in, |_, _| {
                        StandardNormal.sample(&mut rng)
                    }));
                    fan_in = width;
                }
                let biases = hyper.relu_bias.then(|| {
                    (0..hyper.relu_layers)
                        .map(|_| DVector::from_fn(width, |_, _| StandardNormal.sample(&mut rng)))
                        .collect()
                });
                (
                    width,
                    Params::Relu {
                        weights,
                        biases,
                        fan_in_scaling: hyper.relu_fan_in_scaling,
                    },
                )
            }
        };
        Ok(Self {
            kind,
            input_dim,
            feature_dim,
            seed,
            params,
        })
    }

    /// ReLU network with caller-supplied weights (`weights[l]` is
    /// `width_l × fan_in_l`), no biases and no scaling.
    pub fn relu_with_weights(weights: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = weights
            .first()
            .ok_or_else(|| Error::InvalidArgument("relu network needs a layer".into()))?;
        let input_dim = first.ncols();
        let mut fan_in = input_dim;
        for w in &weights {
            if w.ncols() != fan_in || w.nrows() == 0 {
                return Err(Error::DimensionMismatch {
                    expected: fan_in,
                    found: w.ncols(),
                });
            }
            fan_in = w.nrows();
        }
        Ok(Self {
            kind: FeatureKind::ReluNet,
            input_dim,
            feature_dim: fan_in,
            seed: 0,
            params: Params::Relu {
                weights,
                biases: None,
                fan_in_scaling: false,
            },
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Map every row of `x` to its feature vector.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: x.ncols(),
            });
        }
        let n = x.nrows();
        let out = match &self.params {
            Params::Linear { bias } => {
                if *bias {
                    x.clone().insert_column(self.input_dim, 1.0)
                } else {
                    x.clone()
                }
            }
            Params::Rff { frequencies } => {
                let half = frequencies.nrows();
                let proj = x * frequencies.transpose();
                let scale = (1.0 / half as f64).sqrt();
                let mut f = DMatrix::zeros(n, 2 * half);
                for k in 0..half {
                    for i in 0..n {
                        let (s, c) = proj[(i, k)].sin_cos();
                        f[(i, k)] = scale * c;
                        f[(i, half + k)] = scale * s;
                    }
                }
                f
            }
            Params::Relu {
                weights,
                biases,
                fan_in_scaling,
            } => {
                let mut h = x.clone();
                for (l, w) in weights.iter().enumerate() {
                    let mut pre = &h * w.transpose();
                    if *fan_in_scaling {
                        pre /= (w.ncols() as f64).sqrt();
                    }
                    if let Some(bs) = biases {
                        for mut row in pre.row_iter_mut() {
                            row += bs[l].transpose();
                        }
                    }
                    pre.apply(|v| *v = v.max(0.0));
                    h = pre;
                }
                h
            }
        };
        Ok(out)
    }

    /// Feature vector of a single input.
    pub fn apply_one(&self, x: &[f64]) -> Result<DVector<f64>> {
        let row = DMatrix::from_row_slice(1, x.len(), x);
        let f = self.apply(&row)?;
        Ok(f.row(0).transpose())
    }

    /// Kernel approximation `<phi(x), phi(x')>`.
    pub fn kernel_estimate(&self, x: &[f64], x_prime: &[f64]) -> Result<f64> {
        Ok(self.apply_one(x)?.dot(&self.apply_one(x_prime)?))
    }
}

/// Analytic Gaussian kernel `exp(-|x - x'|^2 / (2 s^2))`.
pub fn gaussian_kernel(x: &[f64], x_prime: &[f64], bandwidth: f64) -> f64 {
    let sq: f64 = x.iter().zip(x_prime).map(|(a, b)| (a - b) * (a - b)).sum();
    (-sq / (2.0 * bandwidth * bandwidth)).exp()
}

/// Largest squared row norm, the empirical surrogate of the feature bound.
pub fn max_sq_norm(features: &DMatrix<f64>) -> f64 {
    features
        .row_iter()
        .map(|r| r.norm_squared())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp() -> FeatureHyperparams {
        FeatureHyperparams::default()
    }

    #[test]
    fn linear_appends_bias() {
        let map = FeatureMap::build(FeatureKind::Linear, 2, 0, &hp(), 0).unwrap();
        assert_eq!(map.feature_dim(), 3);
        let f = map.apply(&DMatrix::from_row_slice(1, 2, &[0.0, 0.0])).unwrap();
        assert_eq!(f.as_slice(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn linear_kernel_is_bias_product_for_orthogonal_inputs() {
        let map = FeatureMap::build(FeatureKind::Linear, 2, 0, &hp(), 0).unwrap();
        assert_eq!(map.kernel_estimate(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn rff_rows_have_unit_norm() {
        let h = FeatureHyperparams { bandwidth: 1.0, ..hp() };
        let map = FeatureMap::build(FeatureKind::RffGaussian, 5, 64, &h, 7).unwrap();
        let x = DMatrix::from_fn(20, 5, |i, j| (i as f64 - 3.0 * j as f64) * 0.37);
        let f = map.apply(&x).unwrap();
        for row in f.row_iter() {
            assert!((row.norm_squared() - 1.0).abs() < 1e-12);
        }
        assert!((map.kernel_estimate(&[0.3; 5], &[0.3; 5]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rff_rejects_odd_dim_and_bad_bandwidth() {
        assert!(FeatureMap::build(FeatureKind::RffGaussian, 3, 7, &hp(), 0).is_err());
        let h = FeatureHyperparams { bandwidth: 0.0, ..hp() };
        assert!(FeatureMap::build(FeatureKind::RffGaussian, 3, 8, &h, 0).is_err());
        assert!(FeatureMap::build(FeatureKind::Linear, 0, 1, &hp(), 0).is_err());
    }

    #[test]
    fn relu_net_shape_and_determinism() {
        let h = FeatureHyperparams { relu_width: 50, ..hp() };
        let a = FeatureMap::build(FeatureKind::ReluNet, 12, 50, &h, 3).unwrap();
        let b = FeatureMap::build(FeatureKind::ReluNet, 12, 50, &h, 3).unwrap();
        let x = DMatrix::from_fn(4, 12, |i, j| ((i * 12 + j) % 7) as f64 / 7.0);
        let fa = a.apply(&x).unwrap();
        assert_eq!(fa.shape(), (4, 50));
        assert_eq!(fa, b.apply(&x).unwrap());
        assert!(fa.iter().all(|v| *v >= 0.0));
        assert!(FeatureMap::build(FeatureKind::ReluNet, 12, 49, &h, 3).is_err());
    }

    #[test]
    fn relu_default_width_is_500() {
        let map = FeatureMap::build(FeatureKind::ReluNet, 784, 500, &hp(), 3).unwrap();
        let x = DMatrix::from_element(1, 784, 0.5);
        assert_eq!(map.apply(&x).unwrap().ncols(), 500);
    }

    #[test]
    fn zero_weight_relu_gives_zero_features() {
        let map = FeatureMap::relu_with_weights(vec![
            DMatrix::zeros(6, 3),
            DMatrix::zeros(6, 6),
            DMatrix::zeros(6, 6),
        ])
        .unwrap();
        let f = map.apply(&DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 3.0])).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let map = FeatureMap::build(FeatureKind::Linear, 2, 0, &hp(), 0).unwrap();
        assert!(matches!(
            map.apply(&DMatrix::zeros(1, 3)),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(map.kernel_estimate(&[1.0], &[1.0, 2.0]).is_err());
    }
}
