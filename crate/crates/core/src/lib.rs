//! Offline-RL sequential recommender library.
//!
//! The pipeline runs in two stages over a logged interaction dataset: a
//! causal-attention policy is first trained with supervised next-item
//! prediction, then refined with critic-regularized regression against an
//! LSTM critic under soft-updated target networks. Everything needed to run
//! the loop end to end lives here: log ingestion and the transition rule
//! ([`data`]), the two networks ([`models`]), ranking metrics ([`eval`]),
//! both training stages ([`pretrain`], [`crr`]), exact tabular oracles and
//! synthetic generators ([`synth`]), and self-check suites ([`verify`]).

pub mod crr;
pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod pretrain;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
