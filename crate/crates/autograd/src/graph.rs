//! Reverse-mode automatic differentiation over a per-forward op tape.
//!
//! A [`Graph`] is built fresh for every forward pass. Each op records its
//! output tensor and a backward closure over its parents' node ids; node
//! creation order is a topological order, so [`Graph::backward`] walks the
//! tape once in reverse, accumulating gradients into parameter slots.
//!
//! Shape mismatches between op inputs are bugs and panic. Non-finite values
//! are runtime faults: the first op whose output contains a NaN or infinity
//! poisons the graph, and `backward` (or [`Graph::try_scalar`]) reports it
//! by op name instead of propagating garbage.

use rand::Rng;

use crate::error::{Error, Result};
use crate::kernels;
use crate::optim::{GradStore, ParamId, ParamSet};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

type BackwardFn<T> = Box<dyn Fn(&Values<'_, T>, &Tensor<T>, &mut Sink<'_, T>)>;

struct Node<T: Scalar> {
    value: Tensor<T>,
    op: &'static str,
    param: Option<ParamId>,
    backward: Option<BackwardFn<T>>,
}

/// Read access to node values during the backward pass.
pub struct Values<'a, T: Scalar>(&'a [Node<T>]);

impl<T: Scalar> Values<'_, T> {
    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.0[id.0].value
    }
}

/// Gradient accumulator indexed by node. Multiple consumers of a node sum
/// their contributions here.
pub struct Sink<'a, T: Scalar> {
    grads: &'a mut [Option<Tensor<T>>],
}

impl<T: Scalar> Sink<'_, T> {
    fn add(&mut self, id: NodeId, g: Tensor<T>) {
        match &mut self.grads[id.0] {
            Some(acc) => {
                debug_assert_eq!(acc.shape(), g.shape());
                for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += *v;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }
}

pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    fault: Option<&'static str>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), fault: None }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// First op that produced a non-finite output, if any.
    pub fn fault(&self) -> Option<&'static str> {
        self.fault
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Extracts a scalar node value, surfacing any recorded numeric fault.
    pub fn try_scalar(&self, id: NodeId) -> Result<T> {
        if let Some(op) = self.fault {
            return Err(Error::NonFinite { op });
        }
        let t = self.value(id);
        if t.numel() != 1 {
            return Err(Error::NonScalarLoss { numel: t.numel() });
        }
        Ok(t.data()[0])
    }

    fn push(
        &mut self,
        value: Tensor<T>,
        op: &'static str,
        param: Option<ParamId>,
        backward: Option<BackwardFn<T>>,
    ) -> NodeId {
        if self.fault.is_none() && !value.all_finite() {
            self.fault = Some(op);
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { value, op, param, backward });
        id
    }

    fn val(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    /// Gradient of `loss` with respect to every parameter node reachable
    /// from it. Parameters the loss does not reach are simply absent from
    /// the store.
    pub fn backward(&self, loss: NodeId) -> Result<GradStore<T>> {
        if let Some(op) = self.fault {
            return Err(Error::NonFinite { op });
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss { numel: self.value(loss).numel() });
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(self.value(loss).shape().to_vec(), T::ONE));

        let mut store = GradStore::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !g.all_finite() {
                return Err(Error::NonFinite { op: node.op });
            }
            if let Some(pid) = node.param {
                store.accumulate(pid, g.clone());
            }
            if let Some(f) = &node.backward {
                let values = Values(&self.nodes);
                let mut sink = Sink { grads: &mut grads };
                f(&values, &g, &mut sink);
            }
        }
        Ok(store)
    }

    // ── leaves ──────────────────────────────────────────────────────────

    /// Non-differentiable input.
    pub fn constant(&mut self, value: Tensor<T>) -> NodeId {
        self.push(value, "constant", None, None)
    }

    /// Copies a parameter's current value in as a differentiable leaf.
    pub fn param(&mut self, params: &ParamSet<T>, id: ParamId) -> NodeId {
        self.push(params.value(id).clone(), "param", Some(id), None)
    }

    // ── structure ───────────────────────────────────────────────────────

    /// Row gather: output shape is `out_prefix ++ [d]` where `table` is
    /// `[v, d]` and `ids.len() == product(out_prefix)`.
    pub fn embedding(&mut self, table: NodeId, ids: &[u32], out_prefix: &[usize]) -> NodeId {
        let tv = self.val(table);
        assert_eq!(tv.rank(), 2, "embedding table must be 2-d");
        let (v, d) = (tv.shape()[0], tv.shape()[1]);
        let rows: usize = out_prefix.iter().product();
        assert_eq!(rows, ids.len(), "id count does not match output prefix");
        let mut out = Vec::with_capacity(rows * d);
        let tdata = tv.data();
        for &id in ids {
            let id = id as usize;
            assert!(id < v, "embedding id {id} out of range for table of {v}");
            out.extend_from_slice(&tdata[id * d..(id + 1) * d]);
        }
        let mut shape: Vec<usize> = out_prefix.to_vec();
        shape.push(d);
        let ids: Vec<u32> = ids.to_vec();
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            let mut dt = Tensor::zeros([v, d]);
            let dtd = dt.data_mut();
            for (row, &id) in ids.iter().enumerate() {
                let src = &dy.data()[row * d..(row + 1) * d];
                let dst = &mut dtd[id as usize * d..(id as usize + 1) * d];
                for (a, b) in dst.iter_mut().zip(src) {
                    *a += *b;
                }
            }
            sink.add(table, dt);
        });
        self.push(Tensor::new(shape, out), "embedding", None, Some(backward))
    }

    pub fn reshape(&mut self, x: NodeId, shape: impl Into<Vec<usize>>) -> NodeId {
        let shape = shape.into();
        let xv = self.val(x);
        let in_shape = xv.shape().to_vec();
        let out = xv.clone().reshaped(shape.clone());
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, dy.clone().reshaped(in_shape.clone()));
        });
        self.push(out, "reshape", None, Some(backward))
    }

    /// Axis permutation; `axes` lists, for each output axis, the input axis
    /// it takes.
    pub fn permute(&mut self, x: NodeId, axes: &[usize]) -> NodeId {
        let xv = self.val(x);
        let out = permute_data(xv, axes);
        let mut inverse = vec![0usize; axes.len()];
        for (i, &a) in axes.iter().enumerate() {
            inverse[a] = i;
        }
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, permute_data(dy, &inverse));
        });
        self.push(out, "permute", None, Some(backward))
    }

    /// Selects time step `t` from `[b, l, d]`, yielding `[b, d]`.
    pub fn take_step(&mut self, x: NodeId, t: usize) -> NodeId {
        let xv = self.val(x);
        assert_eq!(xv.rank(), 3);
        let (b, l, d) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        assert!(t < l, "step {t} out of range for length {l}");
        let mut out = Vec::with_capacity(b * d);
        for bi in 0..b {
            let base = bi * l * d + t * d;
            out.extend_from_slice(&xv.data()[base..base + d]);
        }
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            let mut dx = Tensor::zeros([b, l, d]);
            for bi in 0..b {
                let base = bi * l * d + t * d;
                dx.data_mut()[base..base + d].copy_from_slice(&dy.data()[bi * d..(bi + 1) * d]);
            }
            sink.add(x, dx);
        });
        self.push(Tensor::new([b, d], out), "take_step", None, Some(backward))
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.rank(), 2);
        assert_eq!(bv.rank(), 2);
        assert_eq!(av.shape()[0], bv.shape()[0], "row count mismatch in concat");
        let (r, ca, cb) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = Vec::with_capacity(r * (ca + cb));
        for i in 0..r {
            out.extend_from_slice(&av.data()[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bv.data()[i * cb..(i + 1) * cb]);
        }
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            let mut da = Tensor::zeros([r, ca]);
            let mut db = Tensor::zeros([r, cb]);
            for i in 0..r {
                let row = &dy.data()[i * (ca + cb)..(i + 1) * (ca + cb)];
                da.data_mut()[i * ca..(i + 1) * ca].copy_from_slice(&row[..ca]);
                db.data_mut()[i * cb..(i + 1) * cb].copy_from_slice(&row[ca..]);
            }
            sink.add(a, da);
            sink.add(b, db);
        });
        self.push(Tensor::new([r, ca + cb], out), "concat_cols", None, Some(backward))
    }

    // ── arithmetic ──────────────────────────────────────────────────────

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.shape(), bv.shape(), "add shape mismatch");
        let mut out = av.clone();
        for (o, v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o += *v;
        }
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(a, dy.clone());
            sink.add(b, dy.clone());
        });
        self.push(out, "add", None, Some(backward))
    }

    /// `x + small` where `small`'s shape is a suffix of `x`'s; `small` is
    /// tiled over the leading axes (bias rows, positional tables).
    pub fn add_broadcast(&mut self, x: NodeId, small: NodeId) -> NodeId {
        let (xv, sv) = (self.val(x), self.val(small));
        let (xs, ss) = (xv.shape(), sv.shape());
        assert!(
            xs.len() >= ss.len() && xs[xs.len() - ss.len()..] == *ss,
            "broadcast shape {ss:?} is not a suffix of {xs:?}"
        );
        let n = sv.numel().max(1);
        let mut out = xv.clone();
        for chunk in out.data_mut().chunks_exact_mut(n) {
            for (o, v) in chunk.iter_mut().zip(sv.data()) {
                *o += *v;
            }
        }
        let small_shape = ss.to_vec();
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, dy.clone());
            let mut ds = Tensor::zeros(small_shape.clone());
            for chunk in dy.data().chunks_exact(n) {
                for (o, v) in ds.data_mut().iter_mut().zip(chunk) {
                    *o += *v;
                }
            }
            sink.add(small, ds);
        });
        self.push(out, "add_broadcast", None, Some(backward))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.shape(), bv.shape(), "mul shape mismatch");
        let mut out = av.clone();
        for (o, v) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= *v;
        }
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let (av, bv) = (vals.val(a), vals.val(b));
            let da = Tensor::from_fn(dy.shape().to_vec(), |i| dy.data()[i] * bv.data()[i]);
            let db = Tensor::from_fn(dy.shape().to_vec(), |i| dy.data()[i] * av.data()[i]);
            sink.add(a, da);
            sink.add(b, db);
        });
        self.push(out, "mul", None, Some(backward))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let cv = T::from_f64(c);
        let out = self.val(x).map(|v| v * cv);
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, dy.map(|v| v * cv));
        });
        self.push(out, "scale", None, Some(backward))
    }

    // ── matrix products ─────────────────────────────────────────────────

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.rank(), 2, "matmul lhs must be 2-d");
        assert_eq!(bv.rank(), 2, "matmul rhs must be 2-d");
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (k2, n) = (bv.shape()[0], bv.shape()[1]);
        assert_eq!(k, k2, "matmul inner dimensions {k} vs {k2}");
        let mut out = Tensor::zeros([m, n]);
        kernels::matmul_nn(out.data_mut(), av.data(), bv.data(), m, k, n);
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let (av, bv) = (vals.val(a), vals.val(b));
            let mut da = Tensor::zeros([m, k]);
            kernels::matmul_nt(da.data_mut(), dy.data(), bv.data(), m, n, k);
            let mut db = Tensor::zeros([k, n]);
            kernels::matmul_tn(db.data_mut(), av.data(), dy.data(), k, m, n);
            sink.add(a, da);
            sink.add(b, db);
        });
        self.push(out, "matmul", None, Some(backward))
    }

    /// Batched `[bt, m, k] x [bt, k, n] -> [bt, m, n]`.
    pub fn bmm(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.rank(), 3);
        assert_eq!(bv.rank(), 3);
        let (bt, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        assert_eq!(bv.shape()[0], bt, "bmm batch mismatch");
        assert_eq!(bv.shape()[1], k, "bmm inner dimension mismatch");
        let n = bv.shape()[2];
        let mut out = Tensor::zeros([bt, m, n]);
        kernels::bmm_nn(out.data_mut(), av.data(), bv.data(), bt, m, k, n);
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let (av, bv) = (vals.val(a), vals.val(b));
            let mut da = Tensor::zeros([bt, m, k]);
            kernels::bmm_nt(da.data_mut(), dy.data(), bv.data(), bt, m, n, k);
            let mut db = Tensor::zeros([bt, k, n]);
            kernels::bmm_tn(db.data_mut(), av.data(), dy.data(), bt, k, m, n);
            sink.add(a, da);
            sink.add(b, db);
        });
        self.push(out, "bmm", None, Some(backward))
    }

    /// Batched `a x bᵀ`: `[bt, m, k] x [bt, n, k] -> [bt, m, n]`. Attention
    /// scores use this directly so keys never need a transposed copy.
    pub fn bmm_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (av, bv) = (self.val(a), self.val(b));
        assert_eq!(av.rank(), 3);
        assert_eq!(bv.rank(), 3);
        let (bt, m, k) = (av.shape()[0], av.shape()[1], av.shape()[2]);
        assert_eq!(bv.shape()[0], bt, "bmm_nt batch mismatch");
        assert_eq!(bv.shape()[2], k, "bmm_nt inner dimension mismatch");
        let n = bv.shape()[1];
        let mut out = Tensor::zeros([bt, m, n]);
        kernels::bmm_nt(out.data_mut(), av.data(), bv.data(), bt, m, k, n);
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let (av, bv) = (vals.val(a), vals.val(b));
            // da = dy x b ; db = dyᵀ x a, both per batch entry.
            let mut da = Tensor::zeros([bt, m, k]);
            kernels::bmm_nn(da.data_mut(), dy.data(), bv.data(), bt, m, n, k);
            let mut db = Tensor::zeros([bt, n, k]);
            kernels::bmm_tn(db.data_mut(), dy.data(), av.data(), bt, n, m, k);
            sink.add(a, da);
            sink.add(b, db);
        });
        self.push(out, "bmm_nt", None, Some(backward))
    }

    // ── activations ─────────────────────────────────────────────────────

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let out = self.val(x).map(|v| v.max_val(T::ZERO));
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let xv = vals.val(x);
            let dx = Tensor::from_fn(dy.shape().to_vec(), |i| {
                if xv.data()[i] > T::ZERO { dy.data()[i] } else { T::ZERO }
            });
            sink.add(x, dx);
        });
        self.push(out, "relu", None, Some(backward))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let out = self.val(x).map(|v| v.fast_sigmoid());
        let me = NodeId(self.nodes.len());
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let y = vals.val(me);
            let dx = Tensor::from_fn(dy.shape().to_vec(), |i| {
                let s = y.data()[i];
                dy.data()[i] * s * (T::ONE - s)
            });
            sink.add(x, dx);
        });
        self.push(out, "sigmoid", None, Some(backward))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let out = self.val(x).map(|v| v.fast_tanh());
        let me = NodeId(self.nodes.len());
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let y = vals.val(me);
            let dx = Tensor::from_fn(dy.shape().to_vec(), |i| {
                let t = y.data()[i];
                dy.data()[i] * (T::ONE - t * t)
            });
            sink.add(x, dx);
        });
        self.push(out, "tanh", None, Some(backward))
    }

    /// Gaussian error linear unit, tanh approximation.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let out = self.val(x).map(gelu_fwd);
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let xv = vals.val(x);
            let dx = Tensor::from_fn(dy.shape().to_vec(), |i| dy.data()[i] * gelu_grad(xv.data()[i]));
            sink.add(x, dx);
        });
        self.push(out, "gelu", None, Some(backward))
    }

    // ── normalization, attention, regularization ────────────────────────

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: NodeId, gain: NodeId, bias: NodeId, eps: f64) -> NodeId {
        let (xv, gv, bv) = (self.val(x), self.val(gain), self.val(bias));
        let d = *xv.shape().last().expect("layer_norm needs rank >= 1");
        assert_eq!(gv.shape(), &[d], "gain shape");
        assert_eq!(bv.shape(), &[d], "bias shape");
        let rows = xv.numel() / d;
        let epst = T::from_f64(eps);
        let inv_d = T::ONE / T::from_f64(d as f64);

        let mut out = Tensor::zeros(xv.shape().to_vec());
        for r in 0..rows {
            let xr = &xv.data()[r * d..(r + 1) * d];
            let or = &mut out.data_mut()[r * d..(r + 1) * d];
            let mean = xr.iter().copied().sum::<T>() * inv_d;
            let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let inv = T::ONE / (var + epst).sqrt();
            for j in 0..d {
                or[j] = gv.data()[j] * (xr[j] - mean) * inv + bv.data()[j];
            }
        }
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let (xv, gv) = (vals.val(x), vals.val(gain));
            let mut dx = Tensor::zeros(xv.shape().to_vec());
            let mut dg = Tensor::zeros([d]);
            let mut db = Tensor::zeros([d]);
            for r in 0..rows {
                let xr = &xv.data()[r * d..(r + 1) * d];
                let dyr = &dy.data()[r * d..(r + 1) * d];
                let mean = xr.iter().copied().sum::<T>() * inv_d;
                let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
                let inv = T::ONE / (var + epst).sqrt();

                let mut m1 = T::ZERO;
                let mut m2 = T::ZERO;
                for j in 0..d {
                    let xh = (xr[j] - mean) * inv;
                    let dyg = dyr[j] * gv.data()[j];
                    m1 += dyg;
                    m2 += dyg * xh;
                    dg.data_mut()[j] += dyr[j] * xh;
                    db.data_mut()[j] += dyr[j];
                }
                m1 *= inv_d;
                m2 *= inv_d;
                let dxr = &mut dx.data_mut()[r * d..(r + 1) * d];
                for j in 0..d {
                    let xh = (xr[j] - mean) * inv;
                    let dyg = dyr[j] * gv.data()[j];
                    dxr[j] = inv * (dyg - m1 - xh * m2);
                }
            }
            sink.add(x, dx);
            sink.add(gain, dg);
            sink.add(bias, db);
        });
        self.push(out, "layer_norm", None, Some(backward))
    }

    /// Softmax over the last axis of `[bt, l, l]` score matrices where row
    /// `i` may only attend to positions `0..=i`; masked entries are exactly
    /// zero in the output.
    pub fn causal_softmax(&mut self, scores: NodeId) -> NodeId {
        let sv = self.val(scores);
        assert_eq!(sv.rank(), 3);
        let (bt, l, l2) = (sv.shape()[0], sv.shape()[1], sv.shape()[2]);
        assert_eq!(l, l2, "causal softmax needs square score matrices");
        let mut out = Tensor::zeros([bt, l, l]);
        {
            let od = out.data_mut();
            for b in 0..bt {
                for i in 0..l {
                    let base = b * l * l + i * l;
                    let row = &sv.data()[base..base + i + 1];
                    let orow = &mut od[base..base + i + 1];
                    let mut mx = row[0];
                    for &v in row.iter() {
                        mx = mx.max_val(v);
                    }
                    let mut z = T::ZERO;
                    for (o, &v) in orow.iter_mut().zip(row) {
                        let e = (v - mx).fast_exp();
                        *o = e;
                        z += e;
                    }
                    let inv = T::ONE / z;
                    for o in orow.iter_mut() {
                        *o *= inv;
                    }
                }
            }
        }
        let me = NodeId(self.nodes.len());
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let p = vals.val(me);
            let mut ds = Tensor::zeros([bt, l, l]);
            for b in 0..bt {
                for i in 0..l {
                    let base = b * l * l + i * l;
                    let pr = &p.data()[base..base + i + 1];
                    let dyr = &dy.data()[base..base + i + 1];
                    let dot: T = pr.iter().zip(dyr).map(|(&a, &b)| a * b).sum();
                    let dsr = &mut ds.data_mut()[base..base + i + 1];
                    for j in 0..=i {
                        dsr[j] = pr[j] * (dyr[j] - dot);
                    }
                }
            }
            sink.add(scores, ds);
        });
        self.push(out, "causal_softmax", None, Some(backward))
    }

    /// Inverted dropout: kept elements are scaled by `1/(1-rate)` so the
    /// expectation is unchanged. `rate == 0` is the identity.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut impl Rng) -> NodeId {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
        if rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let scale = T::from_f64(1.0 / keep);
        let xv = self.val(x);
        let mask: Vec<T> = (0..xv.numel())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { T::ZERO })
            .collect();
        let out = Tensor::from_fn(xv.shape().to_vec(), |i| xv.data()[i] * mask[i]);
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            let dx = Tensor::from_fn(dy.shape().to_vec(), |i| dy.data()[i] * mask[i]);
            sink.add(x, dx);
        });
        self.push(out, "dropout", None, Some(backward))
    }

    // ── recurrent ───────────────────────────────────────────────────────

    /// Single LSTM layer over a full sequence, zero initial state.
    ///
    /// `x` is `[b, l, din]`; weights follow the (input, forget, cell,
    /// output) gate order: `w_ih [din, 4h]`, `w_hh [h, 4h]`, biases `[4h]`.
    /// Returns all hidden states `[b, l, h]`. Backward is hand-rolled
    /// truncated-nowhere BPTT over the cached gate activations.
    pub fn lstm(
        &mut self,
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b_ih: NodeId,
        b_hh: NodeId,
    ) -> NodeId {
        let xv = self.val(x);
        assert_eq!(xv.rank(), 3, "lstm input must be [b, l, din]");
        let (b, l, din) = (xv.shape()[0], xv.shape()[1], xv.shape()[2]);
        assert!(l >= 1);
        let wih = self.val(w_ih);
        let whh = self.val(w_hh);
        assert_eq!(wih.shape()[0], din, "w_ih rows");
        let h4 = wih.shape()[1];
        assert_eq!(h4 % 4, 0, "gate dimension must be 4h");
        let h = h4 / 4;
        assert_eq!(whh.shape(), &[h, h4], "w_hh shape");
        assert_eq!(self.val(b_ih).shape(), &[h4], "b_ih shape");
        assert_eq!(self.val(b_hh).shape(), &[h4], "b_hh shape");

        // gates_x[t] = x_t W_ih + b_ih + b_hh, done for all steps at once.
        let mut gates_x = vec![T::ZERO; b * l * h4];
        kernels::matmul_nn(&mut gates_x, self.val(x).data(), self.val(w_ih).data(), b * l, din, h4);
        {
            let bih = self.val(b_ih).data();
            let bhh = self.val(b_hh).data();
            for row in gates_x.chunks_exact_mut(h4) {
                for j in 0..h4 {
                    row[j] += bih[j] + bhh[j];
                }
            }
        }

        let mut out = Tensor::zeros([b, l, h]);
        let mut gate_cache: Vec<Vec<T>> = Vec::with_capacity(l);
        let mut c_cache: Vec<Vec<T>> = Vec::with_capacity(l);
        let mut tanh_c_cache: Vec<Vec<T>> = Vec::with_capacity(l);

        let mut h_prev = vec![T::ZERO; b * h];
        let mut c_prev = vec![T::ZERO; b * h];
        for t in 0..l {
            let mut gates = vec![T::ZERO; b * h4];
            // Rows of gates_x for step t are strided by l.
            for bi in 0..b {
                gates[bi * h4..(bi + 1) * h4]
                    .copy_from_slice(&gates_x[(bi * l + t) * h4..(bi * l + t) * h4 + h4]);
            }
            kernels::matmul_nn(&mut gates, &h_prev, self.val(w_hh).data(), b, h, h4);

            let mut c_t = vec![T::ZERO; b * h];
            let mut tanh_c = vec![T::ZERO; b * h];
            for bi in 0..b {
                let g = &mut gates[bi * h4..(bi + 1) * h4];
                for j in 0..h {
                    g[j] = g[j].fast_sigmoid(); // i
                    g[h + j] = g[h + j].fast_sigmoid(); // f
                    g[2 * h + j] = g[2 * h + j].fast_tanh(); // g
                    g[3 * h + j] = g[3 * h + j].fast_sigmoid(); // o
                }
                for j in 0..h {
                    let idx = bi * h + j;
                    let c = g[h + j] * c_prev[idx] + g[j] * g[2 * h + j];
                    c_t[idx] = c;
                    let tc = c.fast_tanh();
                    tanh_c[idx] = tc;
                    let hv = g[3 * h + j] * tc;
                    out.data_mut()[(bi * l + t) * h + j] = hv;
                    h_prev[idx] = hv;
                }
            }
            c_prev.copy_from_slice(&c_t);
            gate_cache.push(gates);
            c_cache.push(c_t);
            tanh_c_cache.push(tanh_c);
        }

        let me = NodeId(self.nodes.len());
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let seq = vals.val(me); // hidden states, h_{t-1} source
            let whh = vals.val(w_hh);
            let xv = vals.val(x);

            let mut d_gates_x = vec![T::ZERO; b * l * h4]; // pre-activation grads per step
            let mut dh_next = vec![T::ZERO; b * h];
            let mut dc_next = vec![T::ZERO; b * h];
            let mut dwhh = Tensor::zeros([h, h4]);
            let mut h_prev_buf = vec![T::ZERO; b * h];

            for t in (0..l).rev() {
                let gates = &gate_cache[t];
                let tanh_c = &tanh_c_cache[t];
                let mut da = vec![T::ZERO; b * h4];
                for bi in 0..b {
                    let g = &gates[bi * h4..(bi + 1) * h4];
                    let dar = &mut da[bi * h4..(bi + 1) * h4];
                    for j in 0..h {
                        let idx = bi * h + j;
                        let dh = dy.data()[(bi * l + t) * h + j] + dh_next[idx];
                        let i_g = g[j];
                        let f_g = g[h + j];
                        let g_g = g[2 * h + j];
                        let o_g = g[3 * h + j];
                        let tc = tanh_c[idx];
                        let dc = dc_next[idx] + dh * o_g * (T::ONE - tc * tc);
                        let c_old = if t == 0 { T::ZERO } else { c_cache[t - 1][idx] };
                        dar[j] = dc * g_g * i_g * (T::ONE - i_g);
                        dar[h + j] = dc * c_old * f_g * (T::ONE - f_g);
                        dar[2 * h + j] = dc * i_g * (T::ONE - g_g * g_g);
                        dar[3 * h + j] = dh * tc * o_g * (T::ONE - o_g);
                        dc_next[idx] = dc * f_g;
                    }
                }
                // dh_{t-1} = da W_hhᵀ ; dW_hh += h_{t-1}ᵀ da.
                dh_next.iter_mut().for_each(|v| *v = T::ZERO);
                kernels::matmul_nt(&mut dh_next, &da, whh.data(), b, h4, h);
                if t > 0 {
                    for bi in 0..b {
                        h_prev_buf[bi * h..(bi + 1) * h]
                            .copy_from_slice(&seq.data()[(bi * l + t - 1) * h..(bi * l + t - 1) * h + h]);
                    }
                    kernels::matmul_tn(dwhh.data_mut(), &h_prev_buf, &da, h, b, h4);
                }
                for bi in 0..b {
                    d_gates_x[(bi * l + t) * h4..(bi * l + t) * h4 + h4]
                        .copy_from_slice(&da[bi * h4..(bi + 1) * h4]);
                }
            }

            let mut dx = Tensor::zeros([b, l, din]);
            kernels::matmul_nt(dx.data_mut(), &d_gates_x, vals.val(w_ih).data(), b * l, h4, din);
            let mut dwih = Tensor::zeros([din, h4]);
            kernels::matmul_tn(dwih.data_mut(), xv.data(), &d_gates_x, din, b * l, h4);
            let mut dbias = Tensor::zeros([h4]);
            for row in d_gates_x.chunks_exact(h4) {
                for (o, v) in dbias.data_mut().iter_mut().zip(row) {
                    *o += *v;
                }
            }

            sink.add(x, dx);
            sink.add(w_ih, dwih);
            sink.add(w_hh, dwhh);
            sink.add(b_ih, dbias.clone());
            sink.add(b_hh, dbias);
        });
        self.push(out, "lstm", None, Some(backward))
    }

    // ── reductions and losses ───────────────────────────────────────────

    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.val(x);
        let s: T = xv.data().iter().copied().sum();
        let shape = xv.shape().to_vec();
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, Tensor::full(shape.clone(), dy.data()[0]));
        });
        self.push(Tensor::scalar(s), "sum_all", None, Some(backward))
    }

    pub fn mean_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.val(x);
        let n = xv.numel();
        let inv = T::ONE / T::from_f64(n as f64);
        let s: T = xv.data().iter().copied().sum::<T>() * inv;
        let shape = xv.shape().to_vec();
        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            sink.add(x, Tensor::full(shape.clone(), dy.data()[0] * inv));
        });
        self.push(Tensor::scalar(s), "mean_all", None, Some(backward))
    }

    /// Mean of per-row weighted cross-entropy: `(1/b) Σ_j w_j (lse(x_j) -
    /// x_j[t_j])`. Weights default to one and receive no gradient.
    pub fn cross_entropy_mean(
        &mut self,
        logits: NodeId,
        targets: &[u32],
        weights: Option<&[T]>,
    ) -> NodeId {
        let lv = self.val(logits);
        assert_eq!(lv.rank(), 2, "cross entropy expects [b, classes]");
        let (b, c) = (lv.shape()[0], lv.shape()[1]);
        assert_eq!(targets.len(), b, "target count mismatch");
        if let Some(w) = weights {
            assert_eq!(w.len(), b, "weight count mismatch");
        }
        let w: Vec<T> = weights.map(|w| w.to_vec()).unwrap_or_else(|| vec![T::ONE; b]);
        let targets: Vec<u32> = targets.to_vec();
        for &t in &targets {
            assert!((t as usize) < c, "target class {t} out of range {c}");
        }

        let mut probs = Tensor::zeros([b, c]);
        let mut total = T::ZERO;
        for j in 0..b {
            let row = &lv.data()[j * c..(j + 1) * c];
            let prow = &mut probs.data_mut()[j * c..(j + 1) * c];
            let mut mx = row[0];
            for &v in row.iter() {
                mx = mx.max_val(v);
            }
            let mut z = T::ZERO;
            for (p, &v) in prow.iter_mut().zip(row) {
                let e = (v - mx).fast_exp();
                *p = e;
                z += e;
            }
            let inv = T::ONE / z;
            for p in prow.iter_mut() {
                *p *= inv;
            }
            let lse = z.ln() + mx;
            total += w[j] * (lse - row[targets[j] as usize]);
        }
        let inv_b = T::ONE / T::from_f64(b as f64);
        let loss = total * inv_b;

        let backward: BackwardFn<T> = Box::new(move |_vals, dy, sink| {
            let scale = dy.data()[0] * inv_b;
            let mut dl = Tensor::zeros([b, c]);
            for j in 0..b {
                let coef = scale * w[j];
                let prow = &probs.data()[j * c..(j + 1) * c];
                let drow = &mut dl.data_mut()[j * c..(j + 1) * c];
                for (d, &p) in drow.iter_mut().zip(prow) {
                    *d = coef * p;
                }
                drow[targets[j] as usize] -= coef;
            }
            sink.add(logits, dl);
        });
        self.push(Tensor::scalar(loss), "cross_entropy_mean", None, Some(backward))
    }

    /// Mean squared error against fixed targets: `(1/b) Σ (pred_j - y_j)²`.
    pub fn mse_mean(&mut self, pred: NodeId, targets: &[T]) -> NodeId {
        let pv = self.val(pred);
        assert_eq!(pv.rank(), 1, "mse expects a vector of predictions");
        let b = pv.shape()[0];
        assert_eq!(targets.len(), b, "target count mismatch");
        let targets: Vec<T> = targets.to_vec();
        let inv_b = T::ONE / T::from_f64(b as f64);
        let loss: T = pv
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &y)| (p - y) * (p - y))
            .sum::<T>()
            * inv_b;
        let backward: BackwardFn<T> = Box::new(move |vals, dy, sink| {
            let pv = vals.val(pred);
            let two = T::ONE + T::ONE;
            let scale = dy.data()[0] * inv_b * two;
            let dp = Tensor::from_fn([b], |j| scale * (pv.data()[j] - targets[j]));
            sink.add(pred, dp);
        });
        self.push(Tensor::scalar(loss), "mse_mean", None, Some(backward))
    }
}

fn permute_data<T: Scalar>(src: &Tensor<T>, axes: &[usize]) -> Tensor<T> {
    let in_shape = src.shape();
    assert_eq!(axes.len(), in_shape.len(), "permute axes rank mismatch");
    let mut seen = vec![false; axes.len()];
    for &a in axes {
        assert!(!seen[a], "duplicate axis in permute");
        seen[a] = true;
    }
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let rank = in_shape.len();

    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    // Stride of each output axis in the input buffer.
    let strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();

    let mut out = Tensor::zeros(out_shape.clone());
    let numel = src.numel();
    let mut coords = vec![0usize; rank];
    let mut src_idx = 0usize;
    for i in 0..numel {
        out.data_mut()[i] = src.data()[src_idx];
        // Odometer increment over output coordinates.
        for axis in (0..rank).rev() {
            coords[axis] += 1;
            src_idx += strides[axis];
            if coords[axis] < out_shape[axis] {
                break;
            }
            src_idx -= strides[axis] * out_shape[axis];
            coords[axis] = 0;
        }
    }
    out
}

fn gelu_fwd<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4); // sqrt(2/pi)
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    half * x * (T::ONE + u.fast_tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(0.797_884_560_802_865_4);
    let a = T::from_f64(0.044715);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let u = c * (x + a * x * x * x);
    let t = u.fast_tanh();
    let du = c * (T::ONE + three * a * x * x);
    half * (T::ONE + t) + half * x * (T::ONE - t * t) * du
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn param_graph(values: Vec<f64>) -> (ParamSet<f64>, ParamId) {
        let mut ps = ParamSet::new();
        let n = values.len();
        let id = ps.add("p", Tensor::new([n], values), true);
        (ps, id)
    }

    #[test]
    fn sum_of_param_has_unit_gradients() {
        let (ps, id) = param_graph(vec![1.0, 2.0, 3.0]);
        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let loss = g.sum_all(p);
        assert_eq!(g.value(loss).item(), 6.0);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn quadratic_gradient_is_the_point() {
        // loss = 0.5 * Σ p² has gradient p.
        let (ps, id) = param_graph(vec![0.5, -2.0, 4.0]);
        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let sq = g.mul(p, p);
        let s = g.sum_all(sq);
        let loss = g.scale(s, 0.5);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[0.5, -2.0, 4.0]);
    }

    #[test]
    fn matmul_gradients_match_hand_computation() {
        // loss = sum(A B), dA = row sums of Bᵀ tiled, dB likewise.
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::new([2, 2], vec![1.0, 2.0, 3.0, 4.0]), true);
        let b = ps.add("b", Tensor::new([2, 2], vec![5.0, 6.0, 7.0, 8.0]), true);
        let mut g = Graph::<f64>::new();
        let an = g.param(&ps, a);
        let bn = g.param(&ps, b);
        let c = g.matmul(an, bn);
        assert_eq!(g.value(c).data(), &[19.0, 22.0, 43.0, 50.0]);
        let loss = g.sum_all(c);
        let grads = g.backward(loss).unwrap();
        // dA[i,p] = Σ_j B[p,j]
        assert_eq!(grads.get(a).unwrap().data(), &[11.0, 15.0, 11.0, 15.0]);
        // dB[p,j] = Σ_i A[i,p]
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn node_reused_by_two_consumers_accumulates() {
        let (ps, id) = param_graph(vec![3.0]);
        let mut g = Graph::new();
        let p = g.param(&ps, id);
        let doubled = g.add(p, p);
        let loss = g.sum_all(doubled);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap().data(), &[2.0]);
    }

    #[test]
    fn unreachable_param_absent_from_store() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::new([1], vec![1.0]), true);
        let b = ps.add("b", Tensor::new([1], vec![1.0]), true);
        let mut g = Graph::<f64>::new();
        let an = g.param(&ps, a);
        let _bn = g.param(&ps, b);
        let loss = g.sum_all(an);
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(a).is_some());
        assert!(grads.get(b).is_none());
    }

    #[test]
    fn embedding_gathers_and_scatters_with_duplicates() {
        let mut ps = ParamSet::new();
        let table = ps.add("t", Tensor::new([3, 2], vec![0.0, 1.0, 10.0, 11.0, 20.0, 21.0]), true);
        let mut g = Graph::<f64>::new();
        let tn = g.param(&ps, table);
        let e = g.embedding(tn, &[2, 0, 2], &[3]);
        assert_eq!(g.value(e).shape(), &[3, 2]);
        assert_eq!(g.value(e).data(), &[20.0, 21.0, 0.0, 1.0, 20.0, 21.0]);
        let loss = g.sum_all(e);
        let grads = g.backward(loss).unwrap();
        // Row 2 was gathered twice.
        assert_eq!(grads.get(table).unwrap().data(), &[1.0, 1.0, 0.0, 0.0, 2.0, 2.0]);
    }

    #[test]
    fn broadcast_add_sums_gradient_over_rows() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new([2, 3], vec![0.0; 6]), true);
        let bias = ps.add("b", Tensor::new([3], vec![1.0, 2.0, 3.0]), true);
        let mut g = Graph::<f64>::new();
        let xn = g.param(&ps, x);
        let bn = g.param(&ps, bias);
        let y = g.add_broadcast(xn, bn);
        assert_eq!(g.value(y).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = g.sum_all(y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(bias).unwrap().data(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn permute_round_trips_and_reorders() {
        let t = Tensor::<f64>::new([2, 3, 4], (0..24).map(|i| i as f64).collect());
        let p = permute_data(&t, &[1, 0, 2]);
        assert_eq!(p.shape(), &[3, 2, 4]);
        // p[j, i, k] == t[i, j, k]
        assert_eq!(p.data()[(1 * 2 + 1) * 4 + 2], t.data()[(1 * 3 + 1) * 4 + 2]);
        let back = permute_data(&p, &[1, 0, 2]);
        assert_eq!(back.data(), t.data());

        let q = permute_data(&t, &[2, 1, 0]);
        assert_eq!(q.shape(), &[4, 3, 2]);
        assert_eq!(q.data()[(3 * 3 + 2) * 2 + 1], t.data()[(1 * 3 + 2) * 4 + 3]);
    }

    #[test]
    fn take_step_extracts_and_scatters() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new([2, 3, 2], (0..12).map(|i| i as f64).collect()), true);
        let mut g = Graph::<f64>::new();
        let xn = g.param(&ps, x);
        let s = g.take_step(xn, 1);
        assert_eq!(g.value(s).data(), &[2.0, 3.0, 8.0, 9.0]);
        let loss = g.sum_all(s);
        let grads = g.backward(loss).unwrap();
        let want = [0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(grads.get(x).unwrap().data(), &want);
    }

    #[test]
    fn concat_splits_gradient() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::new([2, 1], vec![1.0, 2.0]), true);
        let b = ps.add("b", Tensor::new([2, 2], vec![3.0, 4.0, 5.0, 6.0]), true);
        let mut g = Graph::<f64>::new();
        let an = g.param(&ps, a);
        let bn = g.param(&ps, b);
        let c = g.concat_cols(an, bn);
        assert_eq!(g.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let doubled = g.scale(c, 2.0);
        let loss = g.sum_all(doubled);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[2.0, 2.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn causal_softmax_rows_are_prefix_distributions() {
        let mut g = Graph::<f64>::new();
        let scores = g.constant(Tensor::new([1, 3, 3], vec![
            5.0, 99.0, 99.0, // row 0 sees only itself
            1.0, 1.0, 99.0, // row 1 sees two entries
            0.0, 1.0, 2.0,
        ]));
        let p = g.causal_softmax(scores);
        let d = g.value(p).data();
        assert_eq!(d[0], 1.0);
        assert_eq!(d[1], 0.0);
        assert_eq!(d[2], 0.0);
        assert!((d[3] - 0.5).abs() < 1e-12 && (d[4] - 0.5).abs() < 1e-12);
        assert_eq!(d[5], 0.0);
        let z: f64 = 1.0 + 1.0f64.exp() + 2.0f64.exp();
        assert!((d[6] - 1.0 / z).abs() < 1e-12);
        assert!((d[7] - 1.0f64.exp() / z).abs() < 1e-12);
        assert!((d[8] - 2.0f64.exp() / z).abs() < 1e-12);
        let row2: f64 = d[6] + d[7] + d[8];
        assert!((row2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn causal_softmax_gradient_sums_to_zero_per_row() {
        let mut ps = ParamSet::new();
        let s = ps.add("s", Tensor::new([1, 2, 2], vec![0.3, 0.0, -0.7, 1.1]), true);
        let mut g = Graph::<f64>::new();
        let sn = g.param(&ps, s);
        let p = g.causal_softmax(sn);
        let w = g.constant(Tensor::new([1, 2, 2], vec![1.0, 0.0, 2.0, -1.0]));
        let weighted = g.mul(p, w);
        let loss = g.sum_all(weighted);
        let grads = g.backward(loss).unwrap();
        let d = grads.get(s).unwrap().data();
        assert!((d[0]).abs() < 1e-12, "single-entry row has zero gradient");
        assert!((d[2] + d[3]).abs() < 1e-12, "softmax gradient sums to zero");
    }

    #[test]
    fn dropout_masks_and_scales() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new([1000], vec![1.0f64; 1000]), true);
        let mut g = Graph::<f64>::new();
        let xn = g.param(&ps, x);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let y = g.dropout(xn, 0.25, &mut rng);
        let data = g.value(y).data().to_vec();
        let kept = data.iter().filter(|&&v| v != 0.0).count();
        for &v in &data {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12);
        }
        // Around 750 kept, loose 5 sigma band.
        assert!((kept as f64 - 750.0).abs() < 5.0 * (1000.0f64 * 0.25 * 0.75).sqrt());

        let loss = g.sum_all(y);
        let grads = g.backward(loss).unwrap();
        for (gv, yv) in grads.get(x).unwrap().data().iter().zip(&data) {
            assert_eq!(*gv, *yv, "gradient equals mask");
        }
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new([3], vec![1.0, 2.0, 3.0]));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let y = g.dropout(x, 0.0, &mut rng);
        assert_eq!(x, y);
    }

    #[test]
    fn cross_entropy_matches_hand_values() {
        // Uniform logits over 4 classes: loss = ln 4.
        let mut g = Graph::<f64>::new();
        let logits = g.constant(Tensor::new([2, 4], vec![0.0; 8]));
        let loss = g.cross_entropy_mean(logits, &[1, 3], None);
        assert!((g.value(loss).item() - 4.0f64.ln()).abs() < 1e-12);

        // Weighted version scales per-row losses before the 1/b mean.
        let mut g = Graph::<f64>::new();
        let logits = g.constant(Tensor::new([2, 4], vec![0.0; 8]));
        let loss = g.cross_entropy_mean(logits, &[1, 3], Some(&[2.0, 0.0]));
        assert!((g.value(loss).item() - 4.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_gradient_is_probs_minus_onehot() {
        let mut ps = ParamSet::new();
        let l = ps.add("l", Tensor::new([1, 3], vec![1.0, 0.0, -1.0]), true);
        let mut g = Graph::<f64>::new();
        let ln = g.param(&ps, l);
        let loss = g.cross_entropy_mean(ln, &[2], None);
        let grads = g.backward(loss).unwrap();
        let z: f64 = (1.0f64).exp() + 1.0 + (-1.0f64).exp();
        let p = [(1.0f64).exp() / z, 1.0 / z, (-1.0f64).exp() / z];
        let d = grads.get(l).unwrap().data();
        assert!((d[0] - p[0]).abs() < 1e-12);
        assert!((d[1] - p[1]).abs() < 1e-12);
        assert!((d[2] - (p[2] - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn mse_matches_hand_values() {
        let mut ps = ParamSet::new();
        let p = ps.add("p", Tensor::new([2], vec![1.0, -1.0]), true);
        let mut g = Graph::<f64>::new();
        let pn = g.param(&ps, p);
        let loss = g.mse_mean(pn, &[0.0, 1.0]);
        assert!((g.value(loss).item() - (1.0 + 4.0) / 2.0).abs() < 1e-12);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data(), &[1.0, -2.0]);
    }

    #[test]
    fn lstm_single_step_matches_scalar_formulas() {
        // b=1, l=1, din=1, h=1 with distinct values everywhere.
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new([1, 1, 1], vec![0.7]), true);
        let w_ih = ps.add("w_ih", Tensor::new([1, 4], vec![0.1, 0.2, 0.3, 0.4]), true);
        let w_hh = ps.add("w_hh", Tensor::new([1, 4], vec![0.5, 0.6, 0.7, 0.8]), true);
        let b_ih = ps.add("b_ih", Tensor::new([4], vec![0.01, 0.02, 0.03, 0.04]), true);
        let b_hh = ps.add("b_hh", Tensor::new([4], vec![0.05, 0.06, 0.07, 0.08]), true);
        let mut g = Graph::<f64>::new();
        let xn = g.param(&ps, x);
        let wihn = g.param(&ps, w_ih);
        let whhn = g.param(&ps, w_hh);
        let bihn = g.param(&ps, b_ih);
        let bhhn = g.param(&ps, b_hh);
        let out = g.lstm(xn, wihn, whhn, bihn, bhhn);

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(0.7 * 0.1 + 0.01 + 0.05);
        let f = sig(0.7 * 0.2 + 0.02 + 0.06);
        let c_g = (0.7 * 0.3 + 0.03 + 0.07f64).tanh();
        let o = sig(0.7 * 0.4 + 0.04 + 0.08);
        let c = f * 0.0 + i * c_g;
        let want = o * c.tanh();
        assert!((g.value(out).item() - want).abs() < 1e-12);
    }

    #[test]
    fn lstm_carries_state_across_steps() {
        // Same input twice: second step differs because of carried (h, c).
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::new([1, 2, 1], vec![0.9, 0.9]), true);
        let w_ih = ps.add("w_ih", Tensor::new([1, 4], vec![0.3; 4]), true);
        let w_hh = ps.add("w_hh", Tensor::new([1, 4], vec![0.4; 4]), true);
        let b_ih = ps.add("b_ih", Tensor::new([4], vec![0.0; 4]), true);
        let b_hh = ps.add("b_hh", Tensor::new([4], vec![0.0; 4]), true);
        let mut g = Graph::<f64>::new();
        let xn = g.param(&ps, x);
        let wihn = g.param(&ps, w_ih);
        let whhn = g.param(&ps, w_hh);
        let bihn = g.param(&ps, b_ih);
        let bhhn = g.param(&ps, b_hh);
        let out = g.lstm(xn, wihn, whhn, bihn, bhhn);
        let d = g.value(out).data();
        assert_ne!(d[0], d[1]);
        assert!(d[1] > d[0], "cell state accumulates for positive gates");
    }

    #[test]
    fn non_finite_forward_is_reported_with_op_name() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new([2], vec![1.0e308, 1.0e308]));
        let y = g.mul(x, x); // overflows to inf
        let loss = g.sum_all(y);
        match g.backward(loss) {
            Err(Error::NonFinite { op }) => assert_eq!(op, "mul"),
            other => panic!("expected NonFinite, got {other:?}"),
        }
        assert!(g.try_scalar(loss).is_err());
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new([2], vec![1.0, 2.0]));
        match g.backward(x) {
            Err(Error::NonScalarLoss { numel }) => assert_eq!(numel, 2),
            other => panic!("expected NonScalarLoss, got {other:?}"),
        }
    }

    #[test]
    fn gelu_reference_points() {
        // gelu(0) = 0, gelu(large) ≈ x, gelu(-large) ≈ 0, gelu is monotone
        // near the origin.
        assert_eq!(gelu_fwd(0.0f64), 0.0);
        assert!((gelu_fwd(10.0f64) - 10.0).abs() < 1e-6);
        assert!(gelu_fwd(-10.0f64).abs() < 1e-6);
        assert!((gelu_fwd(1.0f64) - 0.841192).abs() < 1e-5);
    }
}
