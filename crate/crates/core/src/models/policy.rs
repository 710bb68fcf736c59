//! Causal-attention next-item policy.
//!
//! The network reads a fixed-length, left-padded item window and scores every
//! catalog item for the next step. Logit column `j` corresponds to item id
//! `j + 1`; id 0 is the padding token and is never a valid action.

use std::path::Path;

use offrec_autograd::{checkpoint, functional, seed, Graph, NodeId, ParamId, ParamSet, Scalar, Tensor};

use crate::data::StateSequence;
use crate::error::{Error, Result};
use crate::models::{ensure_finite, flatten_states, linear, ForwardMode, NetworkParams, LN_EPS};

const INIT_TAG: u64 = 0x504f_4c49_4359_494e;
const WEIGHT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    /// Catalog size I. The embedding table holds `items + 1` rows for PAD.
    pub items: usize,
    /// State window length.
    #[serde(default = "default_window")]
    pub window: usize,
    /// Residual stream width.
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    /// Dropout rate used when a forward pass runs in training mode without
    /// an explicit override.
    #[serde(default = "default_dropout")]
    pub dropout: f64,
}

fn default_window() -> usize {
    30
}
fn default_dim() -> usize {
    64
}
fn default_blocks() -> usize {
    2
}
fn default_heads() -> usize {
    2
}
fn default_dropout() -> f64 {
    0.2
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items == 0 {
            return Err(Error::config("policy.items must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("policy.window must be positive"));
        }
        if self.dim == 0 || self.blocks == 0 || self.heads == 0 {
            return Err(Error::config("policy dim, blocks and heads must be positive"));
        }
        if self.dim % self.heads != 0 {
            return Err(Error::config(format!(
                "policy.dim ({}) must be divisible by policy.heads ({})",
                self.dim, self.heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "policy.dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PolicyNetwork<T: Scalar> {
    cfg: PolicyConfig,
    params: ParamSet<T>,
}

impl<T: Scalar> NetworkParams for PolicyNetwork<T> {
    type Elem = T;
    fn params(&self) -> &ParamSet<T> {
        &self.params
    }
    fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }
}

impl<T: Scalar> PolicyNetwork<T> {
    /// Builds a freshly initialized network. Parameters are registered in a
    /// fixed order and weights drawn from a single stream, so equal seeds
    /// give equal networks.
    pub fn new(cfg: PolicyConfig, init_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = seed::rng(&[init_seed, INIT_TAG]);
        let mut params = ParamSet::new();
        let d = cfg.dim;
        let mut weight = |params: &mut ParamSet<T>, name: String, shape: [usize; 2]| {
            params.add(name, Tensor::randn(shape.to_vec(), WEIGHT_STD, &mut rng), true);
        };
        weight(&mut params, "embed.items".into(), [cfg.items + 1, d]);
        weight(&mut params, "embed.pos".into(), [cfg.window, d]);
        for b in 0..cfg.blocks {
            params.add(format!("block{b}.ln1.gain"), Tensor::full([d], T::from_f64(1.0)), true);
            params.add(format!("block{b}.ln1.bias"), Tensor::zeros([d]), true);
            for part in ["q", "k", "v", "o"] {
                weight(&mut params, format!("block{b}.attn.w{part}"), [d, d]);
                params.add(format!("block{b}.attn.b{part}"), Tensor::zeros([d]), true);
            }
            params.add(format!("block{b}.ln2.gain"), Tensor::full([d], T::from_f64(1.0)), true);
            params.add(format!("block{b}.ln2.bias"), Tensor::zeros([d]), true);
            weight(&mut params, format!("block{b}.ffw.w1"), [d, 4 * d]);
            params.add(format!("block{b}.ffw.b1"), Tensor::zeros([4 * d]), true);
            weight(&mut params, format!("block{b}.ffw.w2"), [4 * d, d]);
            params.add(format!("block{b}.ffw.b2"), Tensor::zeros([d]), true);
        }
        params.add("ln_f.gain", Tensor::full([d], T::from_f64(1.0)), true);
        params.add("ln_f.bias", Tensor::zeros([d]), true);
        weight(&mut params, "head.w".into(), [d, cfg.items]);
        params.add("head.b", Tensor::zeros([cfg.items]), true);
        Ok(PolicyNetwork { cfg, params })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    /// Value copy of the item embedding table, `[items + 1, dim]`.
    pub fn item_embeddings(&self) -> Tensor<T> {
        self.params.value(self.id("embed.items")).clone()
    }

    pub fn freeze_item_embeddings(&mut self) {
        let id = self.id("embed.items");
        self.params.set_trainable(id, false);
    }

    fn id(&self, name: &str) -> ParamId {
        self.params.lookup(name).expect("policy parameter name")
    }

    /// Per-position features `[b, window, dim]` after the final layer norm.
    /// Features at step `t` depend only on window positions `0..=t`.
    pub fn forward_features(
        &self,
        g: &mut Graph<T>,
        states: &[StateSequence],
        mode: &mut ForwardMode,
    ) -> Result<NodeId> {
        if states.is_empty() {
            return Err(Error::data("empty state batch"));
        }
        let ids = flatten_states(states, self.cfg.window, self.cfg.items)?;
        let (b, l) = (states.len(), self.cfg.window);
        let table = g.param(&self.params, self.id("embed.items"));
        let tok = g.embedding(table, &ids, &[b, l]);
        let pos = g.param(&self.params, self.id("embed.pos"));
        let mut h = g.add_broadcast(tok, pos);
        h = mode.apply(g, h);
        for blk in 0..self.cfg.blocks {
            h = self.block(g, h, blk, b, mode);
        }
        let gain = g.param(&self.params, self.id("ln_f.gain"));
        let bias = g.param(&self.params, self.id("ln_f.bias"));
        Ok(g.layer_norm(h, gain, bias, LN_EPS))
    }

    fn block(
        &self,
        g: &mut Graph<T>,
        x: NodeId,
        blk: usize,
        b: usize,
        mode: &mut ForwardMode,
    ) -> NodeId {
        let (l, d, nh) = (self.cfg.window, self.cfg.dim, self.cfg.heads);
        let dh = d / nh;
        let p = |g: &mut Graph<T>, part: &str| {
            let full = format!("block{blk}.{part}");
            g.param(&self.params, self.id(&full))
        };

        let gain = p(g, "ln1.gain");
        let bias = p(g, "ln1.bias");
        let ln = g.layer_norm(x, gain, bias, LN_EPS);
        let flat = g.reshape(ln, [b * l, d]);
        let heads = |g: &mut Graph<T>, part: &str| {
            let w = p(g, &format!("attn.w{part}"));
            let bb = p(g, &format!("attn.b{part}"));
            let y = linear(g, flat, w, bb);
            let y = g.reshape(y, [b, l, nh, dh]);
            let y = g.permute(y, &[0, 2, 1, 3]);
            g.reshape(y, [b * nh, l, dh])
        };
        let q = heads(g, "q");
        let k = heads(g, "k");
        let v = heads(g, "v");
        let scores = g.bmm_nt(q, k);
        let scores = g.scale(scores, 1.0 / (dh as f64).sqrt());
        let probs = g.causal_softmax(scores);
        let probs = mode.apply(g, probs);
        let ctx = g.bmm(probs, v);
        let ctx = g.reshape(ctx, [b, nh, l, dh]);
        let ctx = g.permute(ctx, &[0, 2, 1, 3]);
        let ctx = g.reshape(ctx, [b * l, d]);
        let wo = p(g, "attn.wo");
        let bo = p(g, "attn.bo");
        let out = linear(g, ctx, wo, bo);
        let out = mode.apply(g, out);
        let out = g.reshape(out, [b, l, d]);
        let x = g.add(x, out);

        let gain = p(g, "ln2.gain");
        let bias = p(g, "ln2.bias");
        let ln = g.layer_norm(x, gain, bias, LN_EPS);
        let flat = g.reshape(ln, [b * l, d]);
        let w1 = p(g, "ffw.w1");
        let b1 = p(g, "ffw.b1");
        let mid = linear(g, flat, w1, b1);
        let mid = g.gelu(mid);
        let w2 = p(g, "ffw.w2");
        let b2 = p(g, "ffw.b2");
        let out = linear(g, mid, w2, b2);
        let out = mode.apply(g, out);
        let out = g.reshape(out, [b, l, d]);
        g.add(x, out)
    }

    /// Next-item logits `[b, items]` read off the final window position.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        states: &[StateSequence],
        mode: &mut ForwardMode,
    ) -> Result<NodeId> {
        let feats = self.forward_features(g, states, mode)?;
        let last = g.take_step(feats, self.cfg.window - 1);
        let w = g.param(&self.params, self.id("head.w"));
        let b = g.param(&self.params, self.id("head.b"));
        Ok(linear(g, last, w, b))
    }

    /// Evaluation-mode logits as plain rows.
    pub fn logits(&self, states: &[StateSequence]) -> Result<Vec<Vec<T>>> {
        let mut g = Graph::new();
        let out = self.forward(&mut g, states, &mut ForwardMode::Eval)?;
        ensure_finite(&g)?;
        let t = g.value(out);
        Ok(t.data().chunks(self.cfg.items).map(|r| r.to_vec()).collect())
    }

    /// Evaluation-mode action distribution, one probability row per state.
    pub fn distribution(&self, states: &[StateSequence]) -> Result<Vec<Vec<T>>> {
        let mut rows = self.logits(states)?;
        for row in &mut rows {
            functional::softmax_in_place(row);
        }
        Ok(rows)
    }

    /// Writes the checkpoint with construction-default trainability, so a
    /// saved network is byte-identical whether or not embeddings were frozen
    /// at the time. Metadata carries only the architecture.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::to_value(&self.cfg)
            .map_err(|e| Error::data(format!("policy meta encode: {e}")))?;
        let entries: Vec<(String, &Tensor<T>, bool)> =
            self.params.iter().map(|(_, p)| (p.name.clone(), &p.value, true)).collect();
        checkpoint::save(path, &entries, &meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let loaded = checkpoint::load::<T>(path)?;
        let cfg: PolicyConfig = serde_json::from_value(loaded.meta.clone())
            .map_err(|e| Error::data(format!("{}: policy meta: {e}", path.display())))?;
        let mut net = PolicyNetwork::new(cfg, 0)?;
        loaded.fill_params(&mut net.params)?;
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> PolicyNetwork<U> {
        PolicyNetwork { cfg: self.cfg.clone(), params: self.params.cast() }
    }
}
