use thiserror::Error;

/// Errors surfaced by the autodiff substrate.
///
/// Shape mismatches between op inputs are programmer errors and panic instead;
/// everything that can be triggered by runtime data or configuration is an
/// `Error` variant.
#[derive(Debug, Error)]
pub enum Error {
    /// A forward op produced a NaN or infinity. `op` names the first op that
    /// did so in graph order.
    #[error("non-finite value produced by op `{op}`")]
    NonFinite { op: &'static str },

    #[error("backward requires a scalar loss, got {numel} elements")]
    NonScalarLoss { numel: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// The closure handed to the finite-difference checker returned different
    /// values on identical inputs.
    #[error("function is not deterministic under fixed inputs")]
    NonDeterministic,
}

pub type Result<T> = std::result::Result<T, Error>;
