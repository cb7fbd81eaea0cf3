use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied argument violates a documented domain requirement.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A configuration value is inconsistent or out of range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data, with the 1-based row where parsing failed.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A numerical operation failed (singular matrix, total underflow, ...).
    #[error("numerical failure in {context}: {message}")]
    Numerical { context: String, message: String },

    /// A Gibbs/MH step failed at a specific iteration.
    #[error("MCMC failure at iteration {iteration}: {source}")]
    Mcmc {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn numerical(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            message: message.into(),
        }
    }

    pub fn at_iteration(self, iteration: usize) -> Self {
        Error::Mcmc {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
