//! Two-dimensional Gaussian pool: spread of the least-squares coefficients
//! under CRED and uniform labeling, and the selection scatter.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde_json::json;

use super::config::ExperimentConfig;
use super::output::{fmt_f64, ExperimentResult, Table};
use super::stats::{bootstrap_sd_ratio_upper, mean, std_dev};
use super::{tags, thread_pool};
use crate::error::Result;
use crate::features::max_sq_norm;
use crate::labeling::{LabelingDistribution, LabelingPlan, Scheme};
use crate::regression::{default_step_size, gd_fit, ridge_fit, weighted_moments};
use crate::rng::{derive_seed, rng_from_seed};
use crate::spectral::{empirical_covariance, LeverageProfile, SpectrumModel};
use crate::synthetic::sample_gauss2d;

const BOOTSTRAP_REPS: usize = 2000;
const BOOTSTRAP_LEVEL: f64 = 0.99;

/// Fitted coefficients of one labeled trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientRecord {
    pub trial: usize,
    pub scheme: Scheme,
    /// `"ridge"` or `"gd"`.
    pub method: &'static str,
    pub seed: u64,
    pub beta: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadSummary {
    pub method: &'static str,
    pub coefficient: usize,
    pub sd_cred: f64,
    pub sd_uniform: f64,
    pub ratio: f64,
    /// 99% bootstrap upper bound of the ratio.
    pub ratio_upper: f64,
}

/// The shared pool and labeling distributions.
pub struct Gauss2dPool {
    pub x: DMatrix<f64>,
    pub cred: LabelingDistribution,
    pub uniform: LabelingDistribution,
    pub kappa_sq: f64,
}

pub fn build_pool(cfg: &ExperimentConfig) -> Result<Gauss2dPool> {
    let v = &cfg.variance2d;
    let x = sample_gauss2d(v.pool_size, derive_seed(cfg.seed, &[tags::POOL]))?;
    let cov = empirical_covariance(&x)?;
    let spectrum = SpectrumModel::from_covariance(&cov);
    let scores = LeverageProfile::new(&spectrum, &x)?.scores(v.lambda_q)?;
    Ok(Gauss2dPool {
        cred: LabelingDistribution::cred(&scores, v.lambda_q)?,
        uniform: LabelingDistribution::uniform(v.pool_size)?,
        kappa_sq: max_sq_norm(&x),
        x,
    })
}

/// Noisy label of pool point `j` in a trial; duplicates of the same point
/// within a trial share one label.
fn label(x: &DMatrix<f64>, j: usize, noise_sd: f64, trial_seed: u64) -> f64 {
    let z: f64 = StandardNormal.sample(&mut rng_from_seed(derive_seed(trial_seed, &[tags::NOISE, j as u64])));
    x[(j, 0)] + x[(j, 1)] + noise_sd * z
}

/// Restrict a plan to its drawn rows so moments can be formed without
/// materializing pool-sized label vectors.
fn compact(plan: &LabelingPlan, x: &DMatrix<f64>) -> (LabelingPlan, DMatrix<f64>) {
    let rows = DMatrix::from_fn(plan.n(), x.ncols(), |i, k| x[(plan.indices[i], k)]);
    let local = LabelingPlan {
        pool_size: plan.n(),
        indices: (0..plan.n()).collect(),
        q: None,
        ..plan.clone()
    };
    (local, rows)
}

fn run_trial(
    cfg: &ExperimentConfig,
    pool: &Gauss2dPool,
    trial: usize,
) -> Result<Vec<CoefficientRecord>> {
    let v = &cfg.variance2d;
    let trial_seed = derive_seed(cfg.seed, &[tags::TRIAL, trial as u64]);
    let noise_sd = v.noise_var.sqrt();
    let eta = default_step_size(pool.kappa_sq);
    let mut out = Vec::new();
    for (tag, dist) in [(tags::CRED, &pool.cred), (tags::UNIFORM, &pool.uniform)] {
        let seed = derive_seed(trial_seed, &[tag]);
        let plan = dist.draw(v.labeled, seed)?;
        let y: Vec<f64> = plan
            .indices
            .iter()
            .map(|&j| label(&pool.x, j, noise_sd, trial_seed))
            .collect();
        let (local, rows) = compact(&plan, &pool.x);
        let (a, b) = weighted_moments(&local, &rows, &y)?;
        let to_beta = |w: &DVector<f64>| [w[0], w[1]];
        let ridge = ridge_fit(&a, &b, v.ridge)?;
        out.push(CoefficientRecord {
            trial,
            scheme: plan.scheme,
            method: "ridge",
            seed,
            beta: to_beta(&ridge.w),
        });
        if v.gd_iterations > 0 {
            let gd = gd_fit(&a, &b, eta, v.gd_iterations)?;
            out.push(CoefficientRecord {
                trial,
                scheme: plan.scheme,
                method: "gd",
                seed,
                beta: to_beta(&gd.w),
            });
        }
    }
    Ok(out)
}

/// Run all trials; the result is independent of the worker count.
pub fn coefficient_trials(cfg: &ExperimentConfig, pool: &Gauss2dPool) -> Result<Vec<CoefficientRecord>> {
    let per_trial: Vec<Result<Vec<CoefficientRecord>>> = thread_pool(cfg.workers)?
        .install(|| (0..cfg.trials()).into_par_iter().map(|t| run_trial(cfg, pool, t)).collect());
    let mut out = Vec::new();
    for r in per_trial {
        out.extend(r?);
    }
    Ok(out)
}

pub fn spread_summaries(cfg: &ExperimentConfig, records: &[CoefficientRecord]) -> Vec<SpreadSummary> {
    let mut out = Vec::new();
    for method in ["ridge", "gd"] {
        for k in 0..2 {
            let pick = |s: Scheme| -> Vec<f64> {
                records
                    .iter()
                    .filter(|r| r.method == method && r.scheme == s)
                    .map(|r| r.beta[k])
                    .collect()
            };
            let (c, u) = (pick(Scheme::Cred), pick(Scheme::Uniform));
            if c.len() < 2 || u.len() < 2 {
                continue;
            }
            let (sd_cred, sd_uniform) = (std_dev(&c), std_dev(&u));
            let boot_seed = derive_seed(cfg.seed, &[tags::BOOTSTRAP, k as u64]);
            out.push(SpreadSummary {
                method,
                coefficient: k + 1,
                sd_cred,
                sd_uniform,
                ratio: sd_cred / sd_uniform,
                ratio_upper: bootstrap_sd_ratio_upper(&c, &u, BOOTSTRAP_REPS, BOOTSTRAP_LEVEL, boot_seed),
            });
        }
    }
    out
}

/// Pool points (optionally) plus `viz_labeled` draws per scheme.
fn selection_table(cfg: &ExperimentConfig, pool: &Gauss2dPool) -> Result<(Table, u64)> {
    let v = &cfg.variance2d;
    let seed = derive_seed(cfg.seed, &[tags::VIZ]);
    let mut t = Table::new("selection", &["set", "index", "x1", "x2", "q", "weight"]);
    if v.export_pool {
        for j in 0..pool.x.nrows() {
            t.push(vec![
                "pool".into(),
                j.to_string(),
                fmt_f64(pool.x[(j, 0)]),
                fmt_f64(pool.x[(j, 1)]),
                fmt_f64(pool.cred.q[j]),
                String::new(),
            ]);
        }
    }
    for (tag, dist) in [(tags::CRED, &pool.cred), (tags::UNIFORM, &pool.uniform)] {
        let plan = dist.draw(v.viz_labeled, derive_seed(seed, &[tag]))?;
        let set = match plan.scheme {
            Scheme::Uniform => "uniform",
            _ => "cred",
        };
        for (&j, &w) in plan.indices.iter().zip(&plan.weights) {
            t.push(vec![
                set.into(),
                j.to_string(),
                fmt_f64(pool.x[(j, 0)]),
                fmt_f64(pool.x[(j, 1)]),
                fmt_f64(dist.q[j]),
                fmt_f64(w),
            ]);
        }
    }
    Ok((t, seed))
}

fn pool_seeds(cfg: &ExperimentConfig) -> BTreeMap<String, u64> {
    BTreeMap::from([("pool".to_string(), derive_seed(cfg.seed, &[tags::POOL]))])
}

pub fn run_variance2d(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let pool = build_pool(cfg)?;
    let records = coefficient_trials(cfg, &pool)?;
    let summaries = spread_summaries(cfg, &records);

    let mut coef = Table::new("coefficients", &["trial", "scheme", "method", "seed", "beta1", "beta2"]);
    for r in &records {
        coef.push(vec![
            r.trial.to_string(),
            scheme_name(r.scheme).into(),
            r.method.into(),
            r.seed.to_string(),
            fmt_f64(r.beta[0]),
            fmt_f64(r.beta[1]),
        ]);
    }
    let mut summary = Table::new(
        "summary",
        &["method", "coefficient", "sd_cred", "sd_uniform", "sd_ratio", "sd_ratio_upper99"],
    );
    for s in &summaries {
        summary.push(vec![
            s.method.into(),
            format!("beta{}", s.coefficient),
            fmt_f64(s.sd_cred),
            fmt_f64(s.sd_uniform),
            fmt_f64(s.ratio),
            fmt_f64(s.ratio_upper),
        ]);
    }
    let means: Vec<_> = ["ridge", "gd"]
        .iter()
        .flat_map(|m| [Scheme::Cred, Scheme::Uniform].map(|s| (*m, s)))
        .filter_map(|(m, s)| {
            let rows: Vec<_> = records.iter().filter(|r| r.method == m && r.scheme == s).collect();
            (!rows.is_empty()).then(|| {
                let b1: Vec<f64> = rows.iter().map(|r| r.beta[0]).collect();
                let b2: Vec<f64> = rows.iter().map(|r| r.beta[1]).collect();
                json!({ "method": m, "scheme": scheme_name(s), "mean_beta1": mean(&b1), "mean_beta2": mean(&b2) })
            })
        })
        .collect();
    let (selection, viz_seed) = selection_table(cfg, &pool)?;

    let mut seeds = pool_seeds(cfg);
    seeds.insert("selection".into(), viz_seed);
    Ok(ExperimentResult {
        kind: cfg.experiment,
        tables: vec![coef, summary, selection],
        summary: json!({
            "kappa_sq": pool.kappa_sq,
            "means": means,
            "spread": summaries.iter().map(|s| json!({
                "method": s.method,
                "coefficient": s.coefficient,
                "sd_cred": s.sd_cred,
                "sd_uniform": s.sd_uniform,
                "sd_ratio": s.ratio,
                "sd_ratio_upper99": s.ratio_upper,
            })).collect::<Vec<_>>(),
        }),
        seeds,
    })
}

pub fn run_sampling_viz(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let pool = build_pool(cfg)?;
    let (selection, viz_seed) = selection_table(cfg, &pool)?;
    let mut seeds = pool_seeds(cfg);
    seeds.insert("selection".into(), viz_seed);
    Ok(ExperimentResult {
        kind: cfg.experiment,
        tables: vec![selection],
        summary: json!({ "pool_size": pool.x.nrows(), "lambda_q": cfg.variance2d.lambda_q }),
        seeds,
    })
}

pub fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Cred => "cred",
        Scheme::Uniform => "uniform",
        Scheme::Custom => "custom",
    }
}
