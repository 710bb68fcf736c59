//! Self-contained verification suites behind the `verify` CLI command.
//!
//! Each suite checks one pillar against an independent oracle: analytic
//! gradients against central differences, counting-based ranking metrics
//! against full sorts, and closed-form MDP solutions against the Bellman
//! equations they must satisfy.

use offrec_autograd::{finite_diff_check, seed, Graph, NodeId, ParamSet, Tensor};
use rand::Rng;

use crate::data::StateSequence;
use crate::error::Result;
use crate::eval::{self, reference};
use crate::models::{CriticConfig, ForwardMode, NetworkParams, PolicyConfig, PolicyNetwork, ValueNetwork};
use crate::synth::tabular::{bellman_residual, exact_advantage, exact_policy_eval, random_mdp, TabularPolicy};

pub const GRADIENT_TOL: f64 = 1e-4;
const FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

impl SuiteReport {
    fn from_fd(name: &str, report: offrec_autograd::FdReport) -> SuiteReport {
        SuiteReport {
            name: name.to_string(),
            ok: report.max_rel_err <= GRADIENT_TOL,
            detail: format!(
                "max rel err {:.3e} over {} coords (worst {}[{}]: analytic {:.6e}, numeric {:.6e}), tol {GRADIENT_TOL:.0e}",
                report.max_rel_err,
                report.coords_checked,
                report.worst_param,
                report.worst_index,
                report.worst_analytic,
                report.worst_numeric
            ),
        }
    }
}

fn internal(e: crate::error::Error) -> offrec_autograd::Error {
    offrec_autograd::Error::Config(format!("verify case: {e}"))
}

/// Central-difference checks for every differentiable building block and
/// for the two assembled networks, all in f64.
pub fn gradient_suite() -> Result<Vec<SuiteReport>> {
    let mut out = Vec::new();
    let mut rng = seed::rng(&[0x4744_5355_4954_4531]);

    // A fixed projection makes each loss scalar while keeping every output
    // coordinate influential.
    let mix_loss = |g: &mut Graph<f64>, y: NodeId, w: Tensor<f64>| {
        let t = g.tanh(y);
        let w = g.constant(w);
        let m = g.mul(t, w);
        g.sum_all(m)
    };

    {
        let mut params = ParamSet::new();
        let table = params.add("table", Tensor::randn([7, 5], 0.5, &mut rng), true);
        let ids: Vec<u32> = vec![2, 0, 6, 2, 4, 1];
        let w = Tensor::randn([6, 5], 1.0, &mut rng);
        let report = finite_diff_check(&mut params, FD_EPS, |p| {
            let mut g = Graph::new();
            let t = g.param(p, table);
            let y = g.embedding(t, &ids, &[6]);
            let loss = mix_loss(&mut g, y, w.clone());
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.embedding", report));
    }

    {
        let mut params = ParamSet::new();
        let w1 = params.add("w1", Tensor::randn([4, 6], 0.5, &mut rng), true);
        let b1 = params.add("b1", Tensor::randn([6], 0.5, &mut rng), true);
        let w2 = params.add("w2", Tensor::randn([6, 3], 0.5, &mut rng), true);
        let b2 = params.add("b2", Tensor::randn([3], 0.5, &mut rng), true);
        let x = Tensor::randn([5, 4], 1.0, &mut rng);
        let w = Tensor::randn([5, 3], 1.0, &mut rng);
        let report = finite_diff_check(&mut params, FD_EPS, |p| {
            let mut g = Graph::new();
            let x = g.constant(x.clone());
            let (w1, b1, w2, b2) = (g.param(p, w1), g.param(p, b1), g.param(p, w2), g.param(p, b2));
            let h = g.matmul(x, w1);
            let h = g.add_broadcast(h, b1);
            let h = g.gelu(h);
            let y = g.matmul(h, w2);
            let y = g.add_broadcast(y, b2);
            let loss = mix_loss(&mut g, y, w.clone());
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.dense", report));
    }

    {
        // Single-head causal attention over [b=2, l=3, d=4], including the
        // input itself.
        let (b, l, d) = (2usize, 3usize, 4usize);
        let mut params = ParamSet::new();
        let x = params.add("x", Tensor::randn([b, l, d], 0.8, &mut rng), true);
        let wq = params.add("wq", Tensor::randn([d, d], 0.5, &mut rng), true);
        let wk = params.add("wk", Tensor::randn([d, d], 0.5, &mut rng), true);
        let wv = params.add("wv", Tensor::randn([d, d], 0.5, &mut rng), true);
        let wo = params.add("wo", Tensor::randn([d, d], 0.5, &mut rng), true);
        let w = Tensor::randn([b, l, d], 1.0, &mut rng);
        let report = finite_diff_check(&mut params, FD_EPS, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let flat = g.reshape(xv, [b * l, d]);
            let proj = |g: &mut Graph<f64>, flat: NodeId, wid| {
                let w = g.param(p, wid);
                let y = g.matmul(flat, w);
                g.reshape(y, [b, l, d])
            };
            let q = proj(&mut g, flat, wq);
            let k = proj(&mut g, flat, wk);
            let v = proj(&mut g, flat, wv);
            let scores = g.bmm_nt(q, k);
            let scores = g.scale(scores, 1.0 / (d as f64).sqrt());
            let probs = g.causal_softmax(scores);
            let ctx = g.bmm(probs, v);
            let flat_ctx = g.reshape(ctx, [b * l, d]);
            let wo = g.param(p, wo);
            let y = g.matmul(flat_ctx, wo);
            let y = g.reshape(y, [b, l, d]);
            let loss = mix_loss(&mut g, y, w.clone());
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.attention", report));
    }

    {
        let (b, l, din, h) = (2usize, 3usize, 4usize, 3usize);
        let mut params = ParamSet::new();
        let x = params.add("x", Tensor::randn([b, l, din], 0.8, &mut rng), true);
        let w_ih = params.add("w_ih", Tensor::randn([din, 4 * h], 0.5, &mut rng), true);
        let w_hh = params.add("w_hh", Tensor::randn([h, 4 * h], 0.5, &mut rng), true);
        let b_ih = params.add("b_ih", Tensor::randn([4 * h], 0.5, &mut rng), true);
        let b_hh = params.add("b_hh", Tensor::randn([4 * h], 0.5, &mut rng), true);
        let w = Tensor::randn([b, l, h], 1.0, &mut rng);
        let report = finite_diff_check(&mut params, FD_EPS, |p| {
            let mut g = Graph::new();
            let xv = g.param(p, x);
            let (wi, wh, bi, bh) = (g.param(p, w_ih), g.param(p, w_hh), g.param(p, b_ih), g.param(p, b_hh));
            let y = g.lstm(xv, wi, wh, bi, bh);
            let loss = mix_loss(&mut g, y, w.clone());
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.recurrent", report));
    }

    {
        let mut params = ParamSet::new();
        let logits = params.add("logits", Tensor::randn([5, 7], 1.0, &mut rng), true);
        let targets: Vec<u32> = vec![3, 0, 6, 6, 1];
        let weights: Vec<f64> = vec![1.0, 0.5, 2.0, 0.0, 1.5];
        let report = finite_diff_check(&mut params, FD_EPS, |p| {
            let mut g = Graph::new();
            let lv = g.param(p, logits);
            let loss = g.cross_entropy_mean(lv, &targets, Some(&weights));
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.softmax_ce", report));
    }

    {
        let cfg = PolicyConfig { items: 9, window: 4, dim: 8, blocks: 1, heads: 2, dropout: 0.0 };
        let net = PolicyNetwork::<f64>::new(cfg, 17)?;
        let mut probe = net.params().clone();
        let states: Vec<StateSequence> = vec![
            StateSequence::from_ids(vec![0, 0, 3, 7]),
            StateSequence::from_ids(vec![1, 2, 3, 4]),
            StateSequence::from_ids(vec![9, 8, 7, 6]),
        ];
        let targets: Vec<u32> = vec![4, 0, 8];
        let report = finite_diff_check(&mut probe, FD_EPS, |p| {
            let mut local = net.clone();
            local.params_mut().copy_values_from(p);
            let mut g = Graph::new();
            let logits =
                local.forward(&mut g, &states, &mut ForwardMode::Eval).map_err(internal)?;
            let loss = g.cross_entropy_mean(logits, &targets, None);
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.policy_network", report));
    }

    {
        let cfg = CriticConfig { items: 9, window: 4, dim: 6, hidden: 5, lstm_layers: 1, head_hidden: 6 };
        let table = Tensor::randn([10, 6], 0.5, &mut rng);
        let net = ValueNetwork::<f64>::new(cfg, table, 18)?;
        let mut probe = net.params().clone();
        let states: Vec<StateSequence> = vec![
            StateSequence::from_ids(vec![0, 1, 5, 9]),
            StateSequence::from_ids(vec![2, 2, 4, 6]),
        ];
        let actions: Vec<u32> = vec![3, 8];
        let targets: Vec<f64> = vec![0.7, -0.4];
        let report = finite_diff_check(&mut probe, FD_EPS, |p| {
            let mut local = net.clone();
            local.params_mut().copy_values_from(p);
            let mut g = Graph::new();
            let enc = local.encode_states(&mut g, &states).map_err(internal)?;
            let q = local.q_values(&mut g, enc, &actions).map_err(internal)?;
            let loss = g.mse_mean(q, &targets);
            Ok((g, loss))
        })?;
        out.push(SuiteReport::from_fd("gradients.value_network", report));
    }

    Ok(out)
}

/// Random ranking instances with deliberate score ties: the counting route
/// must agree exactly with the full-sort route, and the per-sample metric
/// invariants must hold.
pub fn metric_suite(instances: usize, seed_key: u64) -> Result<SuiteReport> {
    let mut rng = seed::rng(&[seed_key, 0x4d45_5452_4943_5653]);
    let mut worst = String::new();
    let mut failures = 0usize;
    for case in 0..instances {
        let items = rng.gen_range(3..150usize);
        let scores: Vec<f64> =
            (0..items).map(|_| (rng.gen_range(0..10) as f64) * 0.125).collect();
        let pool_size = rng.gen_range(1..=items);
        let mut pool: Vec<u32> = rand::seq::index::sample(&mut rng, items, pool_size)
            .iter()
            .map(|i| i as u32 + 1)
            .collect();
        pool.sort_unstable();
        let true_item = pool[rng.gen_range(0..pool.len())];
        let k = rng.gen_range(1..=12usize);

        let rank = eval::rank_of_true(&scores, &pool, true_item);
        let (hr, ndcg) = (eval::hr_at_k(rank, k), eval::ndcg_at_k(rank, k));
        let ref_rank = reference::rank_by_full_sort(&scores, &pool, true_item);
        let (ref_hr, ref_ndcg) = reference::metrics_from_sorted_prefix(&scores, &pool, true_item, k);

        let sub: Vec<u32> =
            pool.iter().copied().filter(|&i| i == true_item || rng.gen_bool(0.6)).collect();
        let sub_rank = eval::rank_of_true(&scores, &sub, true_item);

        let ok = rank == ref_rank
            && hr == ref_hr
            && ndcg == ref_ndcg
            && ndcg <= hr
            && rank >= 1
            && rank <= pool.len()
            && sub_rank <= rank
            && eval::hr_at_k(sub_rank, k) >= hr
            && eval::ndcg_at_k(sub_rank, k) >= ndcg;
        if !ok {
            failures += 1;
            if worst.is_empty() {
                worst = format!(
                    "case {case}: rank {rank} vs sorted {ref_rank}, hr {hr} vs {ref_hr}, ndcg {ndcg} vs {ref_ndcg}, subset rank {sub_rank}"
                );
            }
        }
    }
    Ok(SuiteReport {
        name: "metrics.dual_route".into(),
        ok: failures == 0,
        detail: if failures == 0 {
            format!("{instances} instances: counting route matches full sort exactly, invariants hold")
        } else {
            format!("{failures}/{instances} instances disagree; first: {worst}")
        },
    })
}

/// Random MDPs solved in closed form: the linear-solve value function must
/// satisfy its Bellman equation and the advantage must be mean-zero under
/// the policy.
pub fn tabular_suite(mdps: usize, seed_key: u64) -> Result<SuiteReport> {
    let mut rng = seed::rng(&[seed_key, 0x5441_4255_4c41_5253]);
    let mut max_residual = 0.0f64;
    let mut max_identity = 0.0f64;
    for i in 0..mdps {
        let states = rng.gen_range(2..8usize);
        let actions = rng.gen_range(2..6usize);
        let gamma = rng.gen_range(0.1..0.95);
        let mdp = random_mdp(states, actions, gamma, &[seed_key, i as u64]);
        let probs: Vec<Vec<f64>> = (0..states)
            .map(|_| {
                let raw: Vec<f64> = (0..actions).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|p| p / z).collect()
            })
            .collect();
        let policy = TabularPolicy { probs };
        policy.validate(&mdp)?;

        let v = exact_policy_eval(&mdp, &policy)?;
        max_residual = max_residual.max(bellman_residual(&mdp, &policy, &v));

        let adv = exact_advantage(&mdp, &policy)?;
        for s in 0..states {
            let mean: f64 = (0..actions).map(|a| policy.probs[s][a] * adv[s][a]).sum();
            max_identity = max_identity.max(mean.abs());
        }
    }
    const TOL: f64 = 1e-10;
    Ok(SuiteReport {
        name: "tabular.exact_solutions".into(),
        ok: max_residual <= TOL && max_identity <= TOL,
        detail: format!(
            "{mdps} MDPs: max Bellman residual {max_residual:.3e}, max policy-weighted advantage {max_identity:.3e}, tol {TOL:.0e}"
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_suite_passes_within_tolerance() {
        let reports = gradient_suite().unwrap();
        assert_eq!(reports.len(), 7);
        for r in &reports {
            assert!(r.ok, "{}: {}", r.name, r.detail);
        }
    }

    #[test]
    fn metric_suite_passes_on_a_thousand_instances() {
        let r = metric_suite(1000, 1).unwrap();
        assert!(r.ok, "{}", r.detail);
    }

    #[test]
    fn tabular_suite_passes_on_a_hundred_mdps() {
        let r = tabular_suite(100, 2).unwrap();
        assert!(r.ok, "{}", r.detail);
    }
}
