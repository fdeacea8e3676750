use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("generator is reducible: states {unreachable:?} cannot be reached from state {from}")]
    Reducible {
        from: usize,
        unreachable: Vec<usize>,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("non-finite state at step {step} (regime {regime}): {state}")]
    NonFinite {
        step: usize,
        regime: usize,
        state: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line frontend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) | Error::NonFinite { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
