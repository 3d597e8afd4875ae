use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureHyperparams;
use crate::synthetic::{TargetKind, DEFAULT_SIGMA1_SQ};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Variance2d,
    EffdimDiag,
    RmseSweep,
    SamplingViz,
}

impl ExperimentKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentKind::Variance2d => "variance2d",
            ExperimentKind::EffdimDiag => "effdim_diag",
            ExperimentKind::RmseSweep => "rmse_sweep",
            ExperimentKind::SamplingViz => "sampling_viz",
        }
    }

    fn default_trials(&self) -> usize {
        match self {
            ExperimentKind::Variance2d => 1000,
            ExperimentKind::RmseSweep => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Defaults depend on the experiment (1000 for variance2d, 5 for the sweep).
    #[serde(default)]
    pub trials: Option<usize>,
    /// Worker threads; 0 uses all available cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub variance2d: Variance2dConfig,
    #[serde(default)]
    pub effdim: EffdimConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn default_seed() -> u64 {
    20_200_417
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variance2dConfig {
    pub pool_size: usize,
    /// Labels drawn per trial.
    pub labeled: usize,
    pub noise_var: f64,
    /// Regularization of the contribution ratios.
    pub lambda_q: f64,
    /// Ridge used for the weighted least-squares fit.
    pub ridge: f64,
    /// Gradient steps for the GD rows; 0 disables them.
    pub gd_iterations: u64,
    /// Points drawn per scheme for the selection scatter.
    pub viz_labeled: usize,
    /// Include every pool point in the selection table.
    pub export_pool: bool,
}

impl Default for Variance2dConfig {
    fn default() -> Self {
        Self {
            pool_size: 100_000,
            labeled: 3,
            noise_var: 0.01,
            lambda_q: 1e-6,
            ridge: 1e-10,
            gd_iterations: 2000,
            viz_labeled: 100,
            export_pool: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EffdimConfig {
    pub dim: usize,
    pub alpha: f64,
    pub sigma1_sq: f64,
    pub pool_size: usize,
    pub lambdas: Vec<f64>,
}

impl Default for EffdimConfig {
    fn default() -> Self {
        Self {
            dim: 50,
            alpha: 2.0,
            sigma1_sq: DEFAULT_SIGMA1_SQ,
            pool_size: 10_000,
            lambdas: vec![1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepTask {
    /// Truncated-normal power-law pool; needs no files.
    Synthetic,
    Mnist,
    Fashion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepFeatures {
    Linear,
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticPoolConfig {
    pub dim: usize,
    pub alpha: f64,
    pub sigma1_sq: f64,
}

impl Default for SyntheticPoolConfig {
    fn default() -> Self {
        Self {
            dim: 100,
            alpha: 2.0,
            sigma1_sq: DEFAULT_SIGMA1_SQ,
        }
    }
}

/// Assumed regularity used only by the uniform-GD stopping schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub smoothness: f64,
    pub alpha: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            smoothness: 0.5,
            alpha: 2.0,
        }
    }
}

/// How the uniform GD stopping time and the SSSL dimension are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineTuning {
    /// Labeling `g` uses `T = ⌈1/(ηλ_g)⌉` and `k = ⌈N∞(λ_g)⌉` over the shared
    /// λ grid, best of the ten runs kept (as for KRR).
    Grid,
    /// One `λ*` per cell from the stopping-time schedule.
    LambdaStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub task: SweepTask,
    pub features: SweepFeatures,
    pub noise_vars: Vec<f64>,
    pub budgets: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub pool_size: usize,
    pub test_size: usize,
    /// Size of the held-out split taken from the combined image files.
    pub split_test_count: usize,
    /// Directory with the IDX files; defaults to `$CRED_DATA_DIR/<task>`.
    pub data_dir: Option<PathBuf>,
    pub synthetic: SyntheticPoolConfig,
    pub feature_params: FeatureHyperparams,
    pub target: TargetKind,
    pub schedule: ScheduleConfig,
    pub baseline_tuning: BaselineTuning,
    /// Fixed SSSL dimension; otherwise chosen by `baseline_tuning`.
    pub sssl_k: Option<usize>,
    /// Extra SSSL runs, one per listed k.
    pub sssl_k_sweep: Vec<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            task: SweepTask::Synthetic,
            features: SweepFeatures::Linear,
            noise_vars: vec![1e-6, 1e-4, 1e-2, 1.0, 1e2],
            budgets: vec![250, 500, 1000],
            lambda_grid: (-12..=-3).map(|i| 10f64.powi(i)).collect(),
            pool_size: 10_000,
            test_size: 2_000,
            split_test_count: 10_000,
            data_dir: None,
            synthetic: SyntheticPoolConfig::default(),
            feature_params: FeatureHyperparams::default(),
            target: TargetKind::Whitened,
            schedule: ScheduleConfig::default(),
            baseline_tuning: BaselineTuning::Grid,
            sssl_k: None,
            sssl_k_sweep: Vec::new(),
        }
    }
}

impl SweepConfig {
    /// Scale the sweep up to the full published protocol.
    pub fn apply_full_scale(&mut self) {
        self.pool_size = 60_000;
        self.test_size = 10_000;
        self.budgets = vec![1000, 2000, 4000];
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn check_positive_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} must not be empty")));
    }
    if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(invalid(format!("{name} entries must be positive, found {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or_else(|| self.experiment.default_trials())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials() == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        match self.experiment {
            ExperimentKind::Variance2d | ExperimentKind::SamplingViz => {
                let v = &self.variance2d;
                if v.pool_size < 2 {
                    return Err(invalid("variance2d.pool_size must be at least 2"));
                }
                if v.labeled == 0 || v.viz_labeled == 0 {
                    return Err(invalid("variance2d label counts must be positive"));
                }
                if !(v.noise_var >= 0.0) {
                    return Err(invalid("variance2d.noise_var must be nonnegative"));
                }
                check_positive_grid("variance2d.lambda_q", &[v.lambda_q])?;
                if !(v.ridge >= 0.0) {
                    return Err(invalid("variance2d.ridge must be nonnegative"));
                }
            }
            ExperimentKind::EffdimDiag => {
                let e = &self.effdim;
                if e.dim == 0 || e.pool_size == 0 {
                    return Err(invalid("effdim.dim and effdim.pool_size must be positive"));
                }
                if !(e.alpha > 1.0) {
                    return Err(invalid("effdim.alpha must exceed 1"));
                }
                if !(e.sigma1_sq > 0.0) {
                    return Err(invalid("effdim.sigma1_sq must be positive"));
                }
                check_positive_grid("effdim.lambdas", &e.lambdas)?;
            }
            ExperimentKind::RmseSweep => {
                let s = &self.sweep;
                if s.noise_vars.is_empty() {
                    return Err(invalid("sweep.noise_vars must not be empty"));
                }
                if let Some(v) = s.noise_vars.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(invalid(format!("sweep.noise_vars entries must be >= 0, found {v}")));
                }
                if s.budgets.is_empty() || s.budgets.contains(&0) {
                    return Err(invalid("sweep.budgets must be nonempty and positive"));
                }
                check_positive_grid("sweep.lambda_grid", &s.lambda_grid)?;
                if s.pool_size < 2 || s.test_size == 0 {
                    return Err(invalid("sweep.pool_size and sweep.test_size must be positive"));
                }
                if let Some(&n) = s.budgets.iter().find(|&&n| n >= s.pool_size) {
                    return Err(invalid(format!(
                        "budget {n} must be smaller than the pool ({})",
                        s.pool_size
                    )));
                }
                if s.task == SweepTask::Synthetic {
                    let p = &s.synthetic;
                    if p.dim == 0 || !(p.sigma1_sq > 0.0) || !(p.alpha >= 0.0) {
                        return Err(invalid("sweep.synthetic needs dim > 0, sigma1_sq > 0, alpha >= 0"));
                    }
                }
                if !(s.schedule.smoothness > 0.0 && s.schedule.smoothness <= 1.0) {
                    return Err(invalid("sweep.schedule.smoothness must lie in (0, 1]"));
                }
                if !(s.schedule.alpha > 1.0) {
                    return Err(invalid("sweep.schedule.alpha must exceed 1"));
                }
                if s.sssl_k == Some(0) || s.sssl_k_sweep.contains(&0) {
                    return Err(invalid("SSSL dimensions must be positive"));
                }
                if let TargetKind::Source { r } = s.target {
                    if !(r > 0.0 && r <= 1.0) {
                        return Err(invalid("sweep.target.r must lie in (0, 1]"));
                    }
                }
            }
        }
        Ok(())
    }
}
