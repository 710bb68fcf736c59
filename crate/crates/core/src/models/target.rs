//! Online/target network pairing with Polyak averaging.

use offrec_autograd::Scalar;

use crate::error::{Error, Result};
use crate::models::NetworkParams;

/// Keeps a lagged copy of a network. `soft_update` moves every target
/// parameter a fraction `tau` toward its online counterpart; `tau = 1`
/// degenerates to a hard copy.
#[derive(Debug, Clone)]
pub struct TargetPair<N> {
    pub online: N,
    pub target: N,
    tau: f64,
}

impl<N: NetworkParams + Clone> TargetPair<N> {
    pub fn new(online: N, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {tau}")));
        }
        let target = online.clone();
        Ok(TargetPair { online, target, tau })
    }

    /// Reassembles a pair whose target was restored from a checkpoint
    /// rather than cloned fresh.
    pub fn from_parts(online: N, target: N, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau <= 1.0) {
            return Err(Error::config(format!("tau must lie in (0, 1], got {tau}")));
        }
        Ok(TargetPair { online, target, tau })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn soft_update(&mut self)
    where
        N::Elem: Scalar,
    {
        self.target.params_mut().soft_update_from(self.online.params(), self.tau);
    }
}
