//! Experiment driver behind the `ret` binary: configuration, sweeps and
//! plot-ready CSV output.

pub mod config;
pub mod experiments;
pub mod output;
pub mod sweep;

use thiserror::Error;

pub use config::{
    Experiment, ExperimentConfig, PhaseSource, ProtocolKind, ProtocolSpec, RunSettings, SweepParameter, SweepSpec,
};
pub use experiments::{execute, OutputFile, Report};
pub use output::{run, Metadata};
pub use sweep::sweep_runner;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// 1 for bad input or unwritable output, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn context(self, what: impl std::fmt::Display) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{what}: {m}")),
            CliError::Numerical(m) => CliError::Numerical(format!("{what}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{what}: {m}")),
        }
    }
}

impl From<ret_core::Error> for CliError {
    fn from(e: ret_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}
