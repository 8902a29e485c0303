//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ExperimentConfig, Problem};
use crate::error::{CliError, Result};
use crate::layout::ExperimentDir;
use crate::stages::{self, BatchSpec, Method};

#[derive(Debug, Parser)]
#[command(name = "fpuq", version, about = "Functional priors and posterior inference pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Configuration file; defaults to the one recorded by gen-data.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Historical dataset and test task.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "function-1d")]
        experiment: Problem,
        /// Published sample counts and training budgets.
        #[arg(long)]
        full: bool,
        /// Number of historical samples.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Adversarial training of the functional prior.
    TrainPrior {
        #[command(flatten)]
        common: Common,
    },
    /// Operator surrogate from parameter to solution.
    TrainDeeponet {
        #[command(flatten)]
        common: Common,
    },
    /// Posterior draws and summaries for the test task.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "nf")]
        method: Method,
        /// `full`, sizes in field order (`1,5`) or named (`u=1,f=5`).
        #[arg(long, default_value = "full")]
        batch: BatchSpec,
    },
    /// Metrics of completed runs side by side.
    Report {
        /// Run directories or experiment directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn resolve(common: &Common, dir: &ExperimentDir) -> Result<ExperimentConfig> {
    let mut c = stages::stage_config(dir, common.config.as_deref())?;
    if let Some(s) = common.seed {
        c.seed = s;
    }
    Ok(c)
}

/// Caps worker threads from `FPUQ_THREADS`.
pub fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("FPUQ_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("FPUQ_THREADS must be a positive integer, got `{v}`")))?;
    // A pool already built by an earlier call in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs one command and returns a machine-readable description of what it
/// wrote.
pub fn run(cli: Cli) -> Result<serde_json::Value> {
    configure_threads()?;
    match cli.command {
        Command::GenData {
            common,
            experiment,
            full,
            samples,
        } => {
            let dir = ExperimentDir::new(&common.out);
            let mut c = match &common.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::preset(experiment, full),
            };
            if let Some(s) = common.seed {
                c.seed = s;
            }
            if let Some(n) = samples {
                c.data.samples = n;
            }
            stages::gen_data(&c, &dir, common.force)?;
            Ok(json!({"stage": "gen-data", "history": dir.history(), "task": dir.task(), "seed": c.seed}))
        }
        Command::TrainPrior { common } => {
            let dir = ExperimentDir::new(&common.out);
            let c = resolve(&common, &dir)?;
            stages::train_prior(&c, &dir, common.force)?;
            Ok(json!({"stage": "train-prior", "checkpoint": dir.prior(), "seed": c.seed}))
        }
        Command::TrainDeeponet { common } => {
            let dir = ExperimentDir::new(&common.out);
            let c = resolve(&common, &dir)?;
            stages::train_deeponet(&c, &dir, common.force)?;
            Ok(json!({"stage": "train-deeponet", "checkpoint": dir.operator(), "seed": c.seed}))
        }
        Command::Infer {
            common,
            method,
            batch,
        } => {
            let dir = ExperimentDir::new(&common.out);
            let c = resolve(&common, &dir)?;
            let run = stages::infer(&c, &dir, method, &batch, common.force)?;
            Ok(json!({"stage": "infer", "run": run, "seed": c.seed}))
        }
        Command::Report { runs, out, force } => {
            let r = crate::report::write_report(&runs, &out, force)?;
            Ok(json!({"stage": "report", "report": out.join("report.json"), "runs": r.runs.len(), "skipped": r.skipped}))
        }
    }
}
