//! Reverse-mode autodiff substrate for the recommender training stack.
//!
//! The crate is generic over element width: training code instantiates
//! everything at `f32`, while gradient verification reruns the identical
//! graph code at `f64` against central differences. Heavy kernels fan out
//! over rayon when the `parallel` feature (default on) is enabled, with the
//! work partitioned so results are bitwise identical to the sequential
//! build.

pub mod checkpoint;
pub mod error;
pub mod fdcheck;
pub mod functional;
pub mod graph;
pub mod kernels;
pub mod optim;
pub mod par;
pub mod schedule;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use fdcheck::{finite_diff_check, FdReport};
pub use graph::{Graph, NodeId};
pub use optim::{Adam, AdamConfig, GradStore, ParamId, ParamSet, Parameter};
pub use schedule::{cosine_lr, LrSchedule};
pub use tensor::{Dtype, Scalar, Tensor};
