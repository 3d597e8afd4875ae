//! Config-driven experiments. Each run derives every random seed from one
//! master seed, computes all results in memory, then writes CSV tables plus
//! a `result.json` manifest (config echo, seeds, summary) atomically.

pub mod config;
pub mod effdim;
pub mod output;
pub mod stats;
pub mod sweep;
pub mod variance2d;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{ExperimentResult, Table};

use crate::error::{Error, Result};

/// Path components for [`crate::rng::derive_seed`].
pub(crate) mod tags {
    pub const POOL: u64 = 1;
    pub const TEST: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const FEATURES: u64 = 4;
    pub const TARGET: u64 = 5;
    pub const TRIAL: u64 = 6;
    pub const NOISE: u64 = 7;
    pub const CRED: u64 = 8;
    pub const UNIFORM: u64 = 9;
    pub const VIZ: u64 = 10;
    pub const BOOTSTRAP: u64 = 11;
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))
}

/// Run an experiment in memory.
pub fn run(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::Variance2d => variance2d::run_variance2d(cfg),
        ExperimentKind::SamplingViz => variance2d::run_sampling_viz(cfg),
        ExperimentKind::EffdimDiag => effdim::run_effdim(cfg),
        ExperimentKind::RmseSweep => sweep::run_rmse_sweep(cfg),
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub wall_time_secs: f64,
}

/// Run an experiment and write its outputs to `out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let result = run(cfg)?;
    let wall_time_secs = start.elapsed().as_secs_f64();
    let files = output::write_outputs(out_dir, cfg, &result, wall_time_secs)?;
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        files,
        wall_time_secs,
    })
}
