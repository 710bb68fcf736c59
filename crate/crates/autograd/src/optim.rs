use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Handle into a [`ParamSet`]. Ids are only meaningful for the set that
/// issued them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    pub trainable: bool,
}

/// Named collection of parameters with accumulated gradients.
///
/// Networks register parameters once at construction; ids stay stable for
/// the life of the set, which lets optimizer state and checkpoints align by
/// index as well as by name.
#[derive(Debug, Clone)]
pub struct ParamSet<T> {
    items: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamSet<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        ParamSet { items: Vec::new(), by_name: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>, trainable: bool) -> ParamId {
        let name = name.into();
        assert!(
            !self.by_name.contains_key(&name),
            "duplicate parameter name `{name}`"
        );
        let id = ParamId(self.items.len());
        self.by_name.insert(name.clone(), id.0);
        let grad = Tensor::zeros(value.shape().to_vec());
        self.items.push(Parameter { name, value, grad, trainable });
        id
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied().map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.items.len()).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.items[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.items[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.items[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.items[id.0].grad
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.items[id.0].trainable = trainable;
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.items.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn total_elements(&self) -> usize {
        self.items.iter().map(|p| p.value.numel()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.items {
            p.grad.data_mut().iter_mut().for_each(|v| *v = T::ZERO);
        }
    }

    /// Adds a backward pass's gradients into the accumulators. Parameters the
    /// loss did not reach are left untouched (zero after `zero_grads`).
    pub fn accumulate(&mut self, grads: &GradStore<T>) {
        for (&id, g) in &grads.map {
            let p = &mut self.items[id.0];
            assert_eq!(p.value.shape(), g.shape(), "gradient shape mismatch for `{}`", p.name);
            for (pv, gv) in p.grad.data_mut().iter_mut().zip(g.data()) {
                *pv += *gv;
            }
        }
    }

    /// Moves every value toward `src`: self = tau * src + (1 - tau) * self.
    /// Sets must have identical names, shapes, and order.
    pub fn soft_update_from(&mut self, src: &ParamSet<T>, tau: f64) {
        assert_eq!(self.items.len(), src.items.len(), "parameter count mismatch");
        let t = T::from_f64(tau);
        let one_minus = T::from_f64(1.0 - tau);
        for (dst, s) in self.items.iter_mut().zip(&src.items) {
            assert_eq!(dst.name, s.name, "parameter order mismatch");
            assert_eq!(dst.value.shape(), s.value.shape());
            for (dv, sv) in dst.value.data_mut().iter_mut().zip(s.value.data()) {
                *dv = t * *sv + one_minus * *dv;
            }
        }
    }

    /// Overwrites every value with `src`'s (a tau = 1 hard update).
    pub fn copy_values_from(&mut self, src: &ParamSet<T>) {
        self.soft_update_from(src, 1.0);
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            items: self
                .items
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: Tensor::zeros(p.value.shape().to_vec()),
                    trainable: p.trainable,
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// Gradients keyed by parameter, as returned by a backward pass.
#[derive(Debug, Default)]
pub struct GradStore<T> {
    map: HashMap<ParamId, Tensor<T>>,
}

impl<T: Scalar> GradStore<T> {
    pub fn new() -> Self {
        GradStore { map: HashMap::new() }
    }

    /// Adds `grad` for `id`, accumulating if the parameter already has one
    /// (a parameter used by several ops receives the sum).
    pub fn accumulate(&mut self, id: ParamId, grad: Tensor<T>) {
        match self.map.entry(id) {
            std::collections::hash_map::Entry::Occupied(mut e) => {
                let acc = e.get_mut();
                assert_eq!(acc.shape(), grad.shape());
                for (a, g) in acc.data_mut().iter_mut().zip(grad.data()) {
                    *a += *g;
                }
            }
            std::collections::hash_map::Entry::Vacant(e) => {
                e.insert(grad);
            }
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.map.get(&id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor<T>)> {
        self.map.iter().map(|(&id, t)| (id, t))
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Adam with bias correction. Moment buffers align with the `ParamSet` by
/// index; frozen parameters are skipped entirely, so their values and
/// moments stay bit-identical across steps.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>, cfg: AdamConfig) -> Self {
        let m = params.items.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        let v = params.items.iter().map(|p| Tensor::zeros(p.value.shape().to_vec())).collect();
        Adam { cfg, step: 0, m, v }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    /// Applies one update from the gradients accumulated in `params`.
    pub fn step(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive and finite, got {lr}")));
        }
        assert_eq!(params.items.len(), self.m.len(), "optimizer built for a different parameter set");
        self.step += 1;
        let t = self.step as i32;
        let b1 = T::from_f64(self.cfg.beta1);
        let b2 = T::from_f64(self.cfg.beta2);
        let one = T::ONE;
        let bc1 = T::from_f64(1.0 - self.cfg.beta1.powi(t));
        let bc2 = T::from_f64(1.0 - self.cfg.beta2.powi(t));
        let eps = T::from_f64(self.cfg.eps);
        let lr_t = T::from_f64(lr);

        for (i, p) in params.items.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            assert_eq!(self.m[i].shape(), p.value.shape(), "moment shape mismatch for `{}`", p.name);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let val = p.value.data_mut();
            let grad = p.grad.data();
            for j in 0..val.len() {
                let g = grad[j];
                m[j] = b1 * m[j] + (one - b1) * g;
                v[j] = b2 * v[j] + (one - b2) * g * g;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                val[j] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Moment buffers flattened for checkpointing, named after their
    /// parameters.
    pub fn export_state(&self, params: &ParamSet<T>) -> Vec<(String, Tensor<T>)> {
        let mut out = Vec::with_capacity(self.m.len() * 2);
        for (i, p) in params.items.iter().enumerate() {
            out.push((format!("adam.m.{}", p.name), self.m[i].clone()));
            out.push((format!("adam.v.{}", p.name), self.v[i].clone()));
        }
        out
    }

    /// Rebuilds optimizer state saved by [`export_state`]. Missing or
    /// misshapen entries are configuration errors.
    pub fn restore_state(
        params: &ParamSet<T>,
        cfg: AdamConfig,
        step: u64,
        tensors: &HashMap<String, Tensor<T>>,
    ) -> Result<Self> {
        let mut m = Vec::with_capacity(params.items.len());
        let mut v = Vec::with_capacity(params.items.len());
        for p in &params.items {
            for (key, store) in [(format!("adam.m.{}", p.name), &mut m), (format!("adam.v.{}", p.name), &mut v)] {
                let t = tensors
                    .get(&key)
                    .ok_or_else(|| Error::Checkpoint(format!("missing optimizer tensor `{key}`")))?;
                if t.shape() != p.value.shape() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer tensor `{key}` has shape {:?}, parameter has {:?}",
                        t.shape(),
                        p.value.shape()
                    )));
                }
                store.push(t.clone());
            }
        }
        Ok(Adam { cfg, step, m, v })
    }
}
