//! Importance labeling for least-squares regression in explicit and
//! random-feature spaces.
//!
//! Points of an unlabeled pool are selected for labeling with probability
//! proportional to their contribution ratio to the effective dimension
//! (ridge leverage score) plus the mean ratio, and the labeled losses are
//! reweighted by `1 / (N q)` so that gradient descent (or the equivalent
//! weighted ridge solution) stays unbiased.
//!
//! Modules:
//! - [`features`]: linear, Gaussian random Fourier and random ReLU feature maps
//! - [`spectral`]: covariance spectra, leverage scores, effective dimension
//! - [`labeling`]: CRED and uniform labeling distributions and draws
//! - [`regression`]: bias-corrected GD, weighted ridge, schedule, SSSL
//! - [`synthetic`]: synthetic pools, targets and labels
//! - [`data_io`]: IDX files, normalization, CSV pools
//! - [`harness`]: config-driven experiments writing CSV/JSON results

pub mod data_io;
pub mod error;
pub mod features;
pub mod harness;
pub mod labeling;
mod linalg;
pub mod regression;
pub mod rng;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use linalg::EIGEN_CLAMP;
