//! File layout of an experiment directory.

use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
pub struct ExperimentDir {
    pub root: PathBuf,
}

impl ExperimentDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("data").join("history.fpd")
    }

    pub fn task(&self) -> PathBuf {
        self.root.join("data").join("task.json")
    }

    pub fn prior(&self) -> PathBuf {
        self.root.join("prior").join("prior.ckpt")
    }

    pub fn prior_loss(&self) -> PathBuf {
        self.root.join("prior").join("loss.csv")
    }

    pub fn prior_checkpoint(&self, step: usize) -> PathBuf {
        self.root.join("prior").join("checkpoints").join(format!("step-{step:07}.ckpt"))
    }

    pub fn operator(&self) -> PathBuf {
        self.root.join("deeponet").join("operator.ckpt")
    }

    pub fn operator_loss(&self) -> PathBuf {
        self.root.join("deeponet").join("loss.csv")
    }

    pub fn operator_metrics(&self) -> PathBuf {
        self.root.join("deeponet").join("metrics.json")
    }

    pub fn infer_root(&self) -> PathBuf {
        self.root.join("infer")
    }

    pub fn run(&self, name: &str) -> PathBuf {
        self.infer_root().join(name)
    }

    pub fn timing(&self, stage: &str) -> PathBuf {
        self.root.join("timings").join(format!("{stage}.json"))
    }
}

/// Files inside one inference run directory.
pub fn run_summary(run: &Path) -> PathBuf {
    run.join("summary.json")
}

pub fn run_curves(run: &Path) -> PathBuf {
    run.join("summary.csv")
}

pub fn run_draws(run: &Path) -> PathBuf {
    run.join("draws.fpd")
}

pub fn run_flow(run: &Path) -> PathBuf {
    run.join("flow.ckpt")
}

pub fn run_loss(run: &Path) -> PathBuf {
    run.join("loss.csv")
}
