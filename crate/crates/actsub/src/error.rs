//! Error taxonomy shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument to a library operation.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Vector/matrix dimension mismatch.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// The active set was empty on the estimation slice, so no sampling
    /// rate can be formed.
    #[error("sampling degenerate: {0}")]
    SamplingDegenerate(String),

    /// Label budget exhausted or no label available for a requested row.
    #[error("budget error: {0}")]
    Budget(String),

    /// Non-finite values encountered during optimization.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Bad configuration file or CLI override.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 runtime, 4 budget.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) | Error::Dimension { .. } => 2,
            Error::Budget(_) => 4,
            _ => 3,
        }
    }
}
