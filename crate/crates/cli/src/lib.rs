//! Pipeline driver: experiment presets, file formats, staged commands and
//! run reports.
//!
//! An experiment directory holds `config.json`, `data/` (historical samples
//! and the test task), `prior/`, `deeponet/`, `infer/<run>/` and
//! `timings/`. Every stage reads only files written by earlier stages.

pub mod cli;
pub mod config;
pub mod container;
pub mod data;
pub mod error;
pub mod layout;
pub mod report;
pub mod stages;

pub use config::{ExperimentConfig, Problem};
pub use container::{ContainerHeader, DatasetContainer};
pub use data::{generate_history, generate_task, target_function, TaskFile};
pub use error::{CliError, Result};
pub use layout::ExperimentDir;
pub use report::{build_report, write_report, Comparison, MetricsRow, RunReport};
pub use stages::{
    gen_data, infer, load_model, read_csv, stage_config, train_deeponet, train_prior, BatchSpec, FieldMetrics, Method,
    RunSummary,
};
