use thiserror::Error;

/// Errors surfaced by the recommender stack.
///
/// The split mirrors the process exit codes of the command-line frontend:
/// configuration problems, data problems, and numeric failures are distinct
/// because an operator reacts to them differently.
#[derive(Debug, Error)]
pub enum Error {
    /// A config field is out of range or inconsistent. The message names the
    /// offending field.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Malformed input data. Carries file/line context where available.
    #[error("data error: {0}")]
    Data(String),

    /// A metric is requested over an empty positive-target set, or a value
    /// left the finite range outside the autodiff layer.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Autograd(#[from] offrec_autograd::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
