//! Recurrent action-value network.
//!
//! States are encoded by stacked LSTM layers over the same item-embedding
//! table the policy learned in pretraining; the table arrives by value and
//! stays frozen. Q(s, a) is a two-layer head over the concatenation of the
//! final-step encoding and the action's embedding. A batch is encoded once
//! and the cheap head is then applied to as many action columns as needed.

use std::path::Path;

use offrec_autograd::{checkpoint, seed, Graph, NodeId, ParamId, ParamSet, Scalar, Tensor};

use crate::data::StateSequence;
use crate::error::{Error, Result};
use crate::models::{flatten_states, linear, NetworkParams};

const INIT_TAG: u64 = 0x4352_4954_4943_494e;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    pub items: usize,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Item embedding width; must match the policy that donated the table.
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// LSTM hidden width.
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_lstm_layers")]
    pub lstm_layers: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: usize,
}

fn default_window() -> usize {
    30
}
fn default_dim() -> usize {
    64
}
fn default_hidden() -> usize {
    256
}
fn default_lstm_layers() -> usize {
    2
}
fn default_head_hidden() -> usize {
    128
}

impl CriticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items == 0 {
            return Err(Error::config("critic.items must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("critic.window must be positive"));
        }
        if self.dim == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return Err(Error::config("critic dim, hidden and head_hidden must be positive"));
        }
        if self.lstm_layers == 0 {
            return Err(Error::config("critic.lstm_layers must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ValueNetwork<T: Scalar> {
    cfg: CriticConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> NetworkParams for ValueNetwork<T> {
    type Elem = T;
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
}

impl<T: Scalar> ValueNetwork<T> {
    /// Builds a critic around a donated embedding table `[items + 1, dim]`,
    /// registered frozen. LSTM and head weights are uniform on
    /// `±1/sqrt(fan)`, drawn from one stream in registration order.
    pub fn new(cfg: CriticConfig, item_table: Tensor<T>, init_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let want = [cfg.items + 1, cfg.dim];
        if item_table.shape() != want {
            return Err(Error::config(format!(
                "item table shape {:?} does not match critic config {:?}",
                item_table.shape(),
                want
            )));
        }
        let mut rng = seed::rng(&[init_seed, INIT_TAG]);
        let mut params = ParamSet::new();
        params.add("embed.items", item_table, false);
        let h = cfg.hidden;
        let bound = 1.0 / (h as f64).sqrt();
        for layer in 0..cfg.lstm_layers {
            let din = if layer == 0 { cfg.dim } else { h };
            let mut t = |shape: Vec<usize>| Tensor::rand_uniform(shape, -bound, bound, &mut rng);
            let w_ih = t(vec![din, 4 * h]);
            let w_hh = t(vec![h, 4 * h]);
            let b_ih = t(vec![4 * h]);
            let b_hh = t(vec![4 * h]);
            params.add(format!("lstm{layer}.w_ih"), w_ih, true);
            params.add(format!("lstm{layer}.w_hh"), w_hh, true);
            params.add(format!("lstm{layer}.b_ih"), b_ih, true);
            params.add(format!("lstm{layer}.b_hh"), b_hh, true);
        }
        let joint = h + cfg.dim;
        let b1 = 1.0 / (joint as f64).sqrt();
        params.add("head.w1", Tensor::rand_uniform([joint, cfg.head_hidden], -b1, b1, &mut rng), true);
        params.add("head.b1", Tensor::rand_uniform([cfg.head_hidden], -b1, b1, &mut rng), true);
        let b2 = 1.0 / (cfg.head_hidden as f64).sqrt();
        params.add("head.w2", Tensor::rand_uniform([cfg.head_hidden, 1], -b2, b2, &mut rng), true);
        params.add("head.b2", Tensor::rand_uniform([1], -b2, b2, &mut rng), true);
        Ok(ValueNetwork { cfg, params })
    }

    pub fn config(&self) -> &CriticConfig {
        &self.cfg
    }

    fn id(&self, name: &str) -> ParamId {
        self.params.lookup(name).expect("critic parameter name")
    }

    /// Final-step state encodings `[b, hidden]`.
    pub fn encode_states(&self, g: &mut Graph<T>, states: &[StateSequence]) -> Result<NodeId> {
        if states.is_empty() {
            return Err(Error::data("empty state batch"));
        }
        let ids = flatten_states(states, self.cfg.window, self.cfg.items)?;
        let (b, l) = (states.len(), self.cfg.window);
        let table = g.param(&self.params, self.id("embed.items"));
        let mut h = g.embedding(table, &ids, &[b, l]);
        for layer in 0..self.cfg.lstm_layers {
            let w_ih = g.param(&self.params, self.id(&format!("lstm{layer}.w_ih")));
            let w_hh = g.param(&self.params, self.id(&format!("lstm{layer}.w_hh")));
            let b_ih = g.param(&self.params, self.id(&format!("lstm{layer}.b_ih")));
            let b_hh = g.param(&self.params, self.id(&format!("lstm{layer}.b_hh")));
            h = g.lstm(h, w_ih, w_hh, b_ih, b_hh);
        }
        Ok(g.take_step(h, l - 1))
    }

    /// Q values `[b]` for one action per encoded state. Call repeatedly with
    /// different action columns to reuse the encoding.
    pub fn q_values(&self, g: &mut Graph<T>, encoded: NodeId, actions: &[u32]) -> Result<NodeId> {
        let b = g.value(encoded).shape()[0];
        if actions.len() != b {
            return Err(Error::data(format!(
                "got {} actions for {b} encoded states",
                actions.len()
            )));
        }
        for &a in actions {
            if a == 0 || a as usize > self.cfg.items {
                return Err(Error::data(format!(
                    "action id {a} outside catalog 1..={}",
                    self.cfg.items
                )));
            }
        }
        let table = g.param(&self.params, self.id("embed.items"));
        let aemb = g.embedding(table, actions, &[b]);
        let joint = g.concat_cols(encoded, aemb);
        let w1 = g.param(&self.params, self.id("head.w1"));
        let b1 = g.param(&self.params, self.id("head.b1"));
        let mid = linear(g, joint, w1, b1);
        let mid = g.relu(mid);
        let w2 = g.param(&self.params, self.id("head.w2"));
        let b2 = g.param(&self.params, self.id("head.b2"));
        let q = linear(g, mid, w2, b2);
        Ok(g.reshape(q, [b]))
    }

    /// Writes the checkpoint with construction-default trainability (frozen
    /// embedding table, everything else trainable).
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(&self.cfg)
            .map_err(|e| Error::data(format!("critic meta encode: {e}")))?;
        let entries: Vec<(String, &Tensor<T>, bool)> = self
            .params
            .iter()
            .map(|(_, p)| (p.name.clone(), &p.value, p.name != "embed.items"))
            .collect();
        checkpoint::save(path, &entries, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let loaded = checkpoint::load::<T>(path)?;
        let cfg: CriticConfig = serde_json::from_value(loaded.meta.clone())
            .map_err(|e| Error::data(format!("{}: critic meta: {e}", path.display())))?;
        let table = Tensor::zeros([cfg.items + 1, cfg.dim]);
        let mut net = ValueNetwork::new(cfg, table, 0)?;
        loaded.fill_params(&mut net.params)?;
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> ValueNetwork<U> {
        ValueNetwork { cfg: self.cfg.clone(), params: self.params.cast() }
    }
}
