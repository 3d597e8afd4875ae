use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cred::harness::{self, ExperimentConfig, ExperimentKind};

#[derive(Parser)]
#[command(name = "cred", version, about = "Importance labeling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; 0 uses every core.
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Use the full-size pool, test set and budgets for the RMSE sweep.
        #[arg(long)]
        full_scale: bool,
    },
    /// Parse and validate a config without running it.
    Check { config: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match real_main(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main(cli: Cli) -> cred::Result<()> {
    match cli.command {
        Command::Check { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            println!("{}: {} config is valid", config.display(), cfg.experiment.as_str());
            Ok(())
        }
        Command::Run {
            config,
            out,
            seed,
            workers,
            trials,
            full_scale,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(t) = trials {
                cfg.trials = Some(t);
            }
            if full_scale {
                if cfg.experiment != ExperimentKind::RmseSweep {
                    log::warn!("--full-scale only affects rmse_sweep configs");
                }
                cfg.sweep.apply_full_scale();
            }
            cfg.validate().map_err(|e| match e {
                cred::Error::Config(msg) => cred::Error::Config(format!("{}: {msg}", config.display())),
                other => other,
            })?;
            let out_dir = out.unwrap_or_else(|| cfg.output_dir.clone());
            log::info!("running {} (seed {}) into {}", cfg.experiment.as_str(), cfg.seed, out_dir.display());
            let report = harness::run_to_dir(&cfg, &out_dir)?;
            for f in &report.files {
                println!("{}", f.display());
            }
            log::info!("done in {:.2}s", report.wall_time_secs);
            Ok(())
        }
    }
}
