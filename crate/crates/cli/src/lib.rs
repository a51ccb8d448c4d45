//! Experiment harness for the sa-core library: TOML experiment configs, a
//! model registry of built-in testbeds, deterministic trajectory files, and
//! the run/check/sweep commands behind the `sa` binary.

pub mod commands;
pub mod config;
mod error;
pub mod registry;
pub mod trajectory;

pub use commands::{
    execute_check, execute_run, execute_sweep, CheckKind, CheckReport, RunSummary, SweepReport,
    OUT_DIR_ENV,
};
pub use config::ExperimentConfig;
pub use error::HarnessError;
