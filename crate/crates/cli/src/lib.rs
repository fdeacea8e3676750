#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Configuration, orchestration and plotting behind the `switchsde` binary.

pub mod config;
pub mod plot;
pub mod run;

use std::fmt;

pub use config::{list_models, Command, ExperimentConfig, ModelRef, Sampling, StepSpec};
pub use run::{run, RunReport};

/// Failures mapped to process exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<switchsde::Error> for CliError {
    fn from(e: switchsde::Error) -> Self {
        use switchsde::Error as E;
        match e {
            E::Numerical(_) | E::NonFinite { .. } => CliError::Numerical(e.to_string()),
            E::Io(err) => CliError::Io(err.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}
