use thiserror::Error;

use echopose_autodiff::AutodiffError;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument or configuration value.
    #[error("invalid input: {0}")]
    Invalid(String),
    /// Malformed file or inconsistent data.
    #[error("format error: {0}")]
    Format(String),
    /// NaN or infinite loss during training.
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Self::Invalid(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Self::Format(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
