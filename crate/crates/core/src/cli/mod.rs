//! Configuration-driven orchestration behind the `sbrg` binary.

pub mod acceptance;
pub mod config;
pub mod run;

pub use acceptance::{run_suite, AcceptanceSummary, Check, CriterionReport, ALL_CRITERIA};
pub use config::{ExperimentConfig, CONFIG_VERSION};
pub use run::{execute, Command, ComparisonRow, Outcome, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("{module}: {message}")]
    Module { module: &'static str, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Wraps a module failure with the module's name attached.
    pub fn module(module: &'static str, e: impl std::fmt::Display) -> Self {
        CliError::Module { module, message: e.to_string() }
    }
}
