use thiserror::Error;

/// Errors raised by configuration handling, simulation, and training.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration file line could not be parsed.
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// A parameter failed validation.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    /// Model parameters stopped being finite, usually a learning-rate problem.
    #[error("non-finite model parameters: {0}")]
    NonFinite(String),

    /// A training run diverged; names the cycle where it happened.
    #[error("diverged at edge {edge}, cycle {cycle}: {reason}")]
    Diverged {
        edge: usize,
        cycle: u64,
        reason: String,
    },

    /// An empirical estimate was requested from too little data.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// Power iteration failed to settle within the step cap.
    #[error("spectral norm estimate did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn parse(line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            line,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
