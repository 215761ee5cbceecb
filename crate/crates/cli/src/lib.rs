//! Library half of the `fundus` command-line tool.
//!
//! Each subcommand is an ordinary function over a validated
//! [`config::ExperimentConfig`], so integration tests can drive the whole
//! pipeline in-process while `main` stays a thin argument-parsing shell.
//!
//! Exit-code contract (asserted by the integration tests):
//! - `0` — success;
//! - `1` — validation failure: bad flags, malformed config, missing or
//!   malformed input files, precondition violations;
//! - `2` — runtime failure: errors after work has started (training
//!   divergence, I/O mid-run, a held output lock).

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod lock;
pub mod plot;
pub mod report;

/// Errors carrying the exit-code class.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad input: config, flags, missing files. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Failure during execution. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

/// Alias used by every command.
pub type CliResult<T> = Result<T, CliError>;

/// Wrap anything printable as a validation error (exit 1).
pub fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

/// Wrap anything printable as a runtime error (exit 2).
pub fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

impl From<fundus_core::Error> for CliError {
    /// Core errors surface as runtime failures unless a call site reclassifies
    /// them (input loading wraps with [`validation`] explicitly).
    fn from(e: fundus_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
