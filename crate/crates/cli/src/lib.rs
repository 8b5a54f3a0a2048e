//! Experiment runner for the parameter-server simulator: configuration
//! parsing, parallel sweeps with CSV metrics and a JSON summary, and the
//! throughput speedup table.

pub mod config;
pub mod runner;
pub mod speedup;

pub use config::{emit_config, parse_config, parse_speedup_config, ExperimentConfig};
pub use runner::{run_experiment, ExperimentReport, RunOptions};
pub use speedup::{speedup_table, write_speedup_csv, SpeedupRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<dana_core::Error> for CliError {
    fn from(e: dana_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.into())
    }
}
