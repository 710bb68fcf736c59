//! Policy and value networks plus the target-network machinery shared by
//! both training stages.

pub mod critic;
pub mod policy;
pub mod target;

pub use critic::{CriticConfig, ValueNetwork};
pub use policy::{PolicyConfig, PolicyNetwork};
pub use target::TargetPair;

use std::collections::HashMap;

use offrec_autograd::{functional, Graph, NodeId, ParamSet, Scalar, Tensor};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

/// Epsilon inside every layer norm.
pub const LN_EPS: f64 = 1e-5;

/// Anything holding a named parameter set: lets target-network updates and
/// checkpointing treat policy and critic uniformly.
pub trait NetworkParams {
    type Elem: Scalar;
    fn params(&self) -> &ParamSet<Self::Elem>;
    fn params_mut(&mut self) -> &mut ParamSet<Self::Elem>;
}

/// Whether a forward pass applies dropout. `Train` carries the stream so two
/// passes with equal keys mask identically.
pub enum ForwardMode<'r> {
    Eval,
    Train { dropout: f64, rng: &'r mut ChaCha12Rng },
}

impl ForwardMode<'_> {
    pub(crate) fn apply<T: Scalar>(&mut self, g: &mut Graph<T>, x: NodeId) -> NodeId {
        match self {
            ForwardMode::Eval => x,
            ForwardMode::Train { dropout, rng } => g.dropout(x, *dropout, rng),
        }
    }
}

pub(crate) fn linear<T: Scalar>(g: &mut Graph<T>, x: NodeId, w: NodeId, b: NodeId) -> NodeId {
    let y = g.matmul(x, w);
    g.add_broadcast(y, b)
}

/// Row-major id buffer for an embedding lookup, checking window length and
/// catalog bounds.
pub(crate) fn flatten_states(
    states: &[crate::data::StateSequence],
    window: usize,
    items: usize,
) -> Result<Vec<u32>> {
    let mut ids = Vec::with_capacity(states.len() * window);
    for s in states {
        if s.window() != window {
            return Err(Error::data(format!(
                "state window {} does not match network window {window}",
                s.window()
            )));
        }
        for &id in s.ids() {
            if id as usize > items {
                return Err(Error::data(format!(
                    "state item id {id} exceeds catalog size {items}"
                )));
            }
            ids.push(id);
        }
    }
    Ok(ids)
}

/// Surfaces a deferred non-finite fault from a forward-only pass, where no
/// `backward` call would catch it.
pub(crate) fn ensure_finite<T: Scalar>(g: &Graph<T>) -> Result<()> {
    match g.fault() {
        None => Ok(()),
        Some(op) => Err(Error::numeric(format!("non-finite value produced by {op}"))),
    }
}

/// Draws one item id from a probability row laid out as column `j` holding
/// item `j + 1`.
pub fn sample_item<T: Scalar>(probs: &[T], rng: &mut ChaCha12Rng) -> u32 {
    functional::sample_categorical(probs, rng) as u32 + 1
}

/// Copies `<prefix><name>` entries of a checkpoint tensor map into a
/// parameter set. Every parameter must be present with a matching shape.
pub(crate) fn fill_prefixed<T: Scalar>(
    params: &mut ParamSet<T>,
    map: &HashMap<String, Tensor<T>>,
    prefix: &str,
) -> Result<()> {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let name = params.get(id).name.clone();
        let key = format!("{prefix}{name}");
        let src = map
            .get(&key)
            .ok_or_else(|| Error::data(format!("checkpoint is missing tensor {key}")))?;
        if src.shape() != params.value(id).shape() {
            return Err(Error::data(format!(
                "checkpoint tensor {key} has shape {:?}, expected {:?}",
                src.shape(),
                params.value(id).shape()
            )));
        }
        *params.value_mut(id) = src.clone();
    }
    Ok(())
}
