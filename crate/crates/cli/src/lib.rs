//! Experiment runner: configuration, multi-seed orchestration, metrics
//! files and agent comparison.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;
pub mod run;

pub use config::{ExperimentConfig, Overrides, Precision};
pub use error::CliError;
pub use report::{compare_runs, format_table, Summary};
pub use run::{run_experiment, ExperimentOutcome, SeedRun};
