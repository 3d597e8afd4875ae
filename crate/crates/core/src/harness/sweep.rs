//! Test RMSE of CRED against uniform baselines over a grid of noise levels
//! and label budgets.

use std::collections::BTreeMap;
use std::path::PathBuf;

use log::{info, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::json;

use super::config::{BaselineTuning, ExperimentConfig, SweepFeatures, SweepTask};
use super::output::{fmt_f64, ExperimentResult, Table};
use super::stats::median;
use super::{tags, thread_pool};
use crate::data_io::{normalize_and_split, IdxFiles, DATA_DIR_ENV};
use crate::error::{Error, Result};
use crate::features::{max_sq_norm, FeatureKind, FeatureMap};
use crate::labeling::{LabelingDistribution, LabelingPlan};
use crate::regression::{
    default_step_size, gd_fit_closed_form, lambda_star, ridge_fit, sssl_fit, stopping_time, weighted_moments,
    Estimator, LogFactor, Schedule, ScheduleParams,
};
use crate::rng::derive_seed;
use crate::spectral::{effective_dimension, empirical_covariance, LeverageProfile, SpectrumModel};
use crate::synthetic::{labels, make_target, SyntheticKind, SyntheticModel};

pub const CRED: &str = "cred";
pub const UNIFORM_KRR: &str = "uniform_krr";
pub const UNIFORM_GD: &str = "uniform_gd";
pub const SSSL: &str = "sssl";

/// Pool, features, target and labeling distributions shared by all trials.
pub struct SweepSetup {
    pub source: String,
    pub f_pool: DMatrix<f64>,
    pub f_test: DMatrix<f64>,
    pub spectrum: SpectrumModel,
    pub theta: DVector<f64>,
    /// Noiseless target on the test points.
    pub f_test_clean: Vec<f64>,
    pub kappa_sq: f64,
    pub eta: f64,
    /// `L²(pool)` norm of the target, used as the source norm `R`.
    pub source_norm: f64,
    /// Largest |f*| on the pool.
    pub target_sup: f64,
    /// One CRED distribution per grid value; uniform where the scores vanish.
    pub cred: Vec<LabelingDistribution>,
    pub cred_fallbacks: Vec<f64>,
    /// `⌈N∞(λ_g)⌉` per grid value, clamped to `1..=d`.
    pub grid_k: Vec<usize>,
    pub uniform: LabelingDistribution,
    pub seeds: BTreeMap<String, u64>,
}

/// Stopping schedule and SSSL dimension of one (noise, budget) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPlan {
    pub noise_var: f64,
    pub n: usize,
    pub schedule: Schedule,
    pub sssl_k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub method: String,
    pub noise_var: f64,
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    /// NaN when the method failed for this trial.
    pub rmse: f64,
    /// Ridge level of the winning run (λ* for gradient descent).
    pub lambda: f64,
    pub iterations: u64,
    pub k: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedianRow {
    pub method: String,
    pub noise_var: f64,
    pub n: usize,
    pub completed: usize,
    pub median_rmse: f64,
}

pub struct SweepOutcome {
    pub setup: SweepSetup,
    pub cells: Vec<CellPlan>,
    pub records: Vec<SweepRecord>,
    pub medians: Vec<MedianRow>,
}

impl SweepOutcome {
    pub fn median(&self, method: &str, noise_var: f64, n: usize) -> Option<f64> {
        self.medians
            .iter()
            .find(|m| m.method == method && m.noise_var == noise_var && m.n == n)
            .map(|m| m.median_rmse)
    }
}

fn task_name(task: SweepTask) -> &'static str {
    match task {
        SweepTask::Synthetic => "synthetic",
        SweepTask::Mnist => "mnist",
        SweepTask::Fashion => "fashion",
    }
}

/// Directory holding the IDX files of an image task, if one is configured.
pub fn data_dir(cfg: &ExperimentConfig) -> Option<PathBuf> {
    cfg.sweep.data_dir.clone().or_else(|| {
        std::env::var_os(DATA_DIR_ENV).map(|d| PathBuf::from(d).join(task_name(cfg.sweep.task)))
    })
}

fn load_inputs(cfg: &ExperimentConfig, seeds: &mut BTreeMap<String, u64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let s = &cfg.sweep;
    let pool_seed = derive_seed(cfg.seed, &[tags::POOL]);
    let test_seed = derive_seed(cfg.seed, &[tags::TEST]);
    seeds.insert("pool".into(), pool_seed);
    seeds.insert("test".into(), test_seed);
    match s.task {
        SweepTask::Synthetic => {
            let p = &s.synthetic;
            let model =
                SyntheticModel::power_law(SyntheticKind::TruncatedNormalProduct, p.dim, p.alpha, p.sigma1_sq)?;
            Ok((model.sample(s.pool_size, pool_seed)?, model.sample(s.test_size, test_seed)?))
        }
        SweepTask::Mnist | SweepTask::Fashion => {
            let name = task_name(s.task);
            let dir = data_dir(cfg).ok_or_else(|| Error::MissingData {
                path: PathBuf::from(format!("${DATA_DIR_ENV}/{name}")),
            })?;
            let files = IdxFiles::in_dir(&dir);
            if !files.exist() {
                return Err(Error::MissingData { path: dir });
            }
            let raw = files.load_all()?;
            let split_seed = derive_seed(cfg.seed, &[tags::SPLIT]);
            seeds.insert("split".into(), split_seed);
            let (train, test) = normalize_and_split(&raw, s.split_test_count, name, split_seed)?;
            Ok((train.subsample(s.pool_size, pool_seed)?.x, test.subsample(s.test_size, test_seed)?.x))
        }
    }
}

pub fn prepare(cfg: &ExperimentConfig) -> Result<SweepSetup> {
    let s = &cfg.sweep;
    let mut seeds = BTreeMap::new();
    let (x_pool, x_test) = load_inputs(cfg, &mut seeds)?;

    let feature_seed = derive_seed(cfg.seed, &[tags::FEATURES]);
    seeds.insert("features".into(), feature_seed);
    let (kind, dim) = match s.features {
        SweepFeatures::Linear => (FeatureKind::Linear, 0),
        SweepFeatures::Relu => (FeatureKind::ReluNet, s.feature_params.relu_width),
    };
    let map = FeatureMap::build(kind, x_pool.ncols(), dim, &s.feature_params, feature_seed)?;
    let f_pool = map.apply(&x_pool)?;
    let f_test = map.apply(&x_test)?;

    let spectrum = SpectrumModel::from_covariance(&empirical_covariance(&f_pool)?);
    let target_seed = derive_seed(cfg.seed, &[tags::TARGET]);
    seeds.insert("target".into(), target_seed);
    let theta = make_target(&spectrum, s.target, None, target_seed)?;
    let pool_clean = &f_pool * &theta;
    let source_norm = (pool_clean.norm_squared() / pool_clean.len() as f64).sqrt();
    let target_sup = pool_clean.amax();
    let kappa_sq = max_sq_norm(&f_pool);

    let profile = LeverageProfile::new(&spectrum, &f_pool)?;
    let uniform = LabelingDistribution::uniform(s.pool_size)?;
    let mut cred = Vec::with_capacity(s.lambda_grid.len());
    let mut cred_fallbacks = Vec::new();
    for &lambda in &s.lambda_grid {
        match LabelingDistribution::cred(&profile.scores(lambda)?, lambda) {
            Ok(d) => cred.push(d),
            Err(Error::DegenerateScores) => {
                warn!("contribution ratios vanish at lambda = {lambda:e}; using uniform labeling");
                cred_fallbacks.push(lambda);
                cred.push(uniform.clone());
            }
            Err(e) => return Err(e),
        }
    }
    let d = spectrum.dim();
    let grid_k = s
        .lambda_grid
        .iter()
        .map(|&l| Ok((effective_dimension(&spectrum, l)?.ceil() as usize).clamp(1, d)))
        .collect::<Result<Vec<_>>>()?;
    info!(
        "{} pool: {} points, {} features, kappa^2 = {kappa_sq:.4e}",
        task_name(s.task),
        f_pool.nrows(),
        f_pool.ncols()
    );
    Ok(SweepSetup {
        source: task_name(s.task).to_string(),
        f_test_clean: (&f_test * &theta).iter().copied().collect(),
        f_pool,
        f_test,
        spectrum,
        theta,
        kappa_sq,
        eta: default_step_size(kappa_sq),
        source_norm,
        target_sup,
        cred,
        cred_fallbacks,
        grid_k,
        uniform,
        seeds,
    })
}

pub fn plan_cell(cfg: &ExperimentConfig, setup: &SweepSetup, noise_var: f64, n: usize) -> Result<CellPlan> {
    let sc = &cfg.sweep.schedule;
    let params = ScheduleParams {
        noise_var,
        source_norm: setup.source_norm,
        smoothness: sc.smoothness,
        alpha: sc.alpha,
        trace_alpha: setup.spectrum.trace_power(1.0 / sc.alpha),
        n_labeled: n,
        pool_size: setup.f_pool.nrows() as f64,
        kappa: setup.kappa_sq.sqrt(),
        label_bound: (setup.target_sup + 3.0 * noise_var.sqrt()).max(1.0),
    };
    let schedule = lambda_star(&params, setup.eta, LogFactor::Default)?;
    let d = setup.spectrum.dim();
    let sssl_k = match cfg.sweep.sssl_k {
        Some(k) => k,
        None => effective_dimension(&setup.spectrum, schedule.lambda_star)?.ceil() as usize,
    }
    .clamp(1, d);
    Ok(CellPlan {
        noise_var,
        n,
        schedule,
        sssl_k,
    })
}

struct Best {
    rmse: f64,
    lambda: f64,
    iterations: u64,
    k: usize,
    error: Option<String>,
}

impl Best {
    fn new() -> Self {
        Self {
            rmse: f64::NAN,
            lambda: f64::NAN,
            iterations: 0,
            k: 0,
            error: None,
        }
    }

    fn offer(&mut self, fit: Result<f64>, lambda: f64, iterations: u64, k: usize) {
        match fit {
            Ok(r) if r.is_finite() && !(r >= self.rmse) => {
                *self = Best {
                    rmse: r,
                    lambda,
                    iterations,
                    k,
                    error: None,
                }
            }
            Ok(_) => {}
            Err(e) => {
                if self.rmse.is_nan() {
                    self.error = Some(e.to_string());
                }
            }
        }
    }
}

fn test_rmse(setup: &SweepSetup, est: &Estimator) -> f64 {
    let pred = &setup.f_test * &est.w;
    let mse = pred
        .iter()
        .zip(&setup.f_test_clean)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / pred.len() as f64;
    mse.sqrt()
}

fn moments(plan: &LabelingPlan, setup: &SweepSetup, y: &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    weighted_moments(plan, &setup.f_pool, y)
}

fn run_trial(cfg: &ExperimentConfig, setup: &SweepSetup, cell: &CellPlan, cell_idx: (usize, usize), trial: usize) -> Vec<SweepRecord> {
    let grid = &cfg.sweep.lambda_grid;
    let trial_seed = derive_seed(cfg.seed, &[tags::TRIAL, cell_idx.0 as u64, cell_idx.1 as u64, trial as u64]);
    let record = |method: &str, best: Best| SweepRecord {
        method: method.to_string(),
        noise_var: cell.noise_var,
        n: cell.n,
        trial,
        seed: trial_seed,
        rmse: best.rmse,
        lambda: best.lambda,
        iterations: best.iterations,
        k: best.k,
        error: if best.rmse.is_nan() {
            Some(best.error.unwrap_or_else(|| "no finite result".into()))
        } else {
            None
        },
    };
    let y = match labels(&setup.f_pool, &setup.theta, cell.noise_var, derive_seed(trial_seed, &[tags::NOISE])) {
        Ok(y) => y,
        Err(e) => {
            let mut failed = Best::new();
            failed.error = Some(e.to_string());
            return vec![record(CRED, failed)];
        }
    };

    let mut cred = Best::new();
    for (g, (&lambda, dist)) in grid.iter().zip(&setup.cred).enumerate() {
        let fit = dist
            .draw(cell.n, derive_seed(trial_seed, &[tags::CRED, g as u64]))
            .and_then(|plan| moments(&plan, setup, &y))
            .and_then(|(a, b)| ridge_fit(&a, &b, lambda))
            .map(|est| test_rmse(setup, &est));
        cred.offer(fit, lambda, 0, 0);
    }

    let extra_ks = &cfg.sweep.sssl_k_sweep;
    let d = setup.spectrum.dim();
    let (mut krr, mut gd, mut sssl) = (Best::new(), Best::new(), Best::new());
    let mut sssl_sweep: Vec<Best> = extra_ks.iter().map(|_| Best::new()).collect();
    for (g, &lambda) in grid.iter().enumerate() {
        let plan = match setup.uniform.draw(cell.n, derive_seed(trial_seed, &[tags::UNIFORM, g as u64])) {
            Ok(p) => p,
            Err(e) => {
                krr.offer(Err(e), lambda, 0, 0);
                continue;
            }
        };
        let ab = moments(&plan, setup, &y);
        let (a, b) = match ab {
            Ok(ab) => ab,
            Err(e) => {
                krr.offer(Err(e), lambda, 0, 0);
                continue;
            }
        };
        krr.offer(ridge_fit(&a, &b, lambda).map(|e| test_rmse(setup, &e)), lambda, 0, 0);
        let (gd_lambda, k) = match cfg.sweep.baseline_tuning {
            BaselineTuning::Grid => (lambda, cfg.sweep.sssl_k.map_or(setup.grid_k[g], |k| k.min(d))),
            BaselineTuning::LambdaStar => (cell.schedule.lambda_star, cell.sssl_k),
        };
        let t = stopping_time(setup.eta, gd_lambda);
        gd.offer(
            gd_fit_closed_form(&a, &b, setup.eta, t).map(|e| test_rmse(setup, &e)),
            gd_lambda,
            t,
            0,
        );
        let sssl_at = |k: usize| {
            sssl_fit(&setup.spectrum, &setup.f_pool, &plan, &y, k.min(d)).map(|e| test_rmse(setup, &e))
        };
        sssl.offer(sssl_at(k), 0.0, 0, k);
        for (best, &k) in sssl_sweep.iter_mut().zip(extra_ks) {
            best.offer(sssl_at(k), 0.0, 0, k.min(d));
        }
    }

    let mut out = vec![record(CRED, cred), record(UNIFORM_KRR, krr), record(UNIFORM_GD, gd), record(SSSL, sssl)];
    for (best, &k) in sssl_sweep.into_iter().zip(extra_ks) {
        out.push(record(&format!("{SSSL}_k{k}"), best));
    }
    out
}

pub fn method_names(cfg: &ExperimentConfig) -> Vec<String> {
    let mut v: Vec<String> = [CRED, UNIFORM_KRR, UNIFORM_GD, SSSL].map(String::from).to_vec();
    v.extend(cfg.sweep.sssl_k_sweep.iter().map(|k| format!("{SSSL}_k{k}")));
    v
}

pub fn rmse_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let s = &cfg.sweep;
    let setup = prepare(cfg)?;
    let mut cells = Vec::new();
    let mut jobs = Vec::new();
    for (i, &noise_var) in s.noise_vars.iter().enumerate() {
        for (j, &n) in s.budgets.iter().enumerate() {
            let cell = plan_cell(cfg, &setup, noise_var, n)?;
            for trial in 0..cfg.trials() {
                jobs.push((cells.len(), (i, j), trial));
            }
            cells.push(cell);
        }
    }
    let per_job: Vec<Vec<SweepRecord>> = thread_pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(c, idx, trial)| run_trial(cfg, &setup, &cells[c], idx, trial))
            .collect()
    });
    let records: Vec<SweepRecord> = per_job.into_iter().flatten().collect();
    for r in records.iter().filter(|r| r.error.is_some()) {
        warn!(
            "{} failed at noise {:e}, n {}, trial {}: {}",
            r.method,
            r.noise_var,
            r.n,
            r.trial,
            r.error.as_deref().unwrap_or("")
        );
    }

    let mut medians = Vec::new();
    for cell in &cells {
        for method in method_names(cfg) {
            let vals: Vec<f64> = records
                .iter()
                .filter(|r| r.method == method && r.noise_var == cell.noise_var && r.n == cell.n)
                .map(|r| r.rmse)
                .collect();
            medians.push(MedianRow {
                completed: vals.iter().filter(|v| v.is_finite()).count(),
                median_rmse: median(&vals),
                method,
                noise_var: cell.noise_var,
                n: cell.n,
            });
        }
    }
    Ok(SweepOutcome {
        setup,
        cells,
        records,
        medians,
    })
}

pub fn run_rmse_sweep(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let out = rmse_sweep(cfg)?;
    let mut trials = Table::new(
        "trials",
        &["method", "noise_var", "n", "trial", "seed", "rmse", "lambda", "iterations", "k", "error"],
    );
    for r in &out.records {
        trials.push(vec![
            r.method.clone(),
            fmt_f64(r.noise_var),
            r.n.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f64(r.rmse),
            fmt_f64(r.lambda),
            r.iterations.to_string(),
            r.k.to_string(),
            r.error.clone().unwrap_or_default(),
        ]);
    }
    let mut summary = Table::new("summary", &["method", "noise_var", "n", "completed", "median_rmse"]);
    for m in &out.medians {
        summary.push(vec![
            m.method.clone(),
            fmt_f64(m.noise_var),
            m.n.to_string(),
            m.completed.to_string(),
            fmt_f64(m.median_rmse),
        ]);
    }
    let mut schedule = Table::new("schedule", &["noise_var", "n", "lambda_star", "iterations", "sssl_k"]);
    for c in &out.cells {
        schedule.push(vec![
            fmt_f64(c.noise_var),
            c.n.to_string(),
            fmt_f64(c.schedule.lambda_star),
            c.schedule.iterations.to_string(),
            c.sssl_k.to_string(),
        ]);
    }
    let st = &out.setup;
    Ok(ExperimentResult {
        kind: cfg.experiment,
        tables: vec![trials, summary, schedule],
        summary: json!({
            "source": st.source,
            "pool_size": st.f_pool.nrows(),
            "feature_dim": st.f_pool.ncols(),
            "kappa_sq": st.kappa_sq,
            "eta": st.eta,
            "source_norm": st.source_norm,
            "cred_uniform_fallback_lambdas": st.cred_fallbacks,
        }),
        seeds: st.seeds.clone(),
    })
}
