//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by tensors, networks, datasets, and training loops.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or dimensionality mismatch between operands.
    #[error("dimension mismatch in {context}: {detail}")]
    Dimension { context: String, detail: String },

    /// A caller-supplied value violated an operation's contract.
    #[error("invalid input: {0}")]
    Input(String),

    /// A configuration or hyperparameter is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An operation was called before its prerequisite state existed.
    #[error("invalid state: {0}")]
    State(String),

    /// A binary file did not match its expected format.
    #[error("format error at byte {offset}: {detail}")]
    Format { offset: u64, detail: String },

    /// A numeric operation produced NaN or infinity.
    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    /// Training failed to make progress or diverged.
    #[error("training error at epoch {epoch}: {detail}")]
    Training { epoch: usize, detail: String },

    /// The verifier failed to reach its accuracy floor.
    #[error("calibration error: {0}")]
    Calibration(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn dimension(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub fn format(offset: u64, detail: impl Into<String>) -> Self {
        Error::Format {
            offset,
            detail: detail.into(),
        }
    }
}
