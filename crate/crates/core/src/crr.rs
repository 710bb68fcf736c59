//! Critic-regularized policy improvement over logged transitions.
//!
//! The second training stage keeps the pretrained policy's item embeddings
//! frozen and reweights its next-item cross entropy by a filter of the
//! estimated advantage, so the policy only imitates logged actions the
//! critic considers better than the policy's own draws. The critic learns
//! one-step TD targets against lagged copies of both networks.
//!
//! Every random choice is keyed by `(seed, purpose, iteration, draw)`, so a
//! run is reproducible and a resumed run is bitwise identical to an
//! uninterrupted one.

use std::collections::HashMap;
use std::path::Path;

use offrec_autograd::{
    checkpoint, seed, Adam, AdamConfig, Graph, LrSchedule, ParamSet, Scalar, Tensor,
};
use rand::Rng;

use crate::data::{StateSequence, Transition};
use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, EvalSample, PoolSelection};
use crate::models::{
    ensure_finite, fill_prefixed, sample_item, CriticConfig, ForwardMode, NetworkParams,
    PolicyNetwork, TargetPair, ValueNetwork,
};
use crate::synth::tabular::{TabularMdp, TabularPolicy};

const BATCH_TAG: u64 = 0x4352_5242_4154_4348;
const ADV_TAG: u64 = 0x4352_5241_4456_534d;
const TD_TAG: u64 = 0x4352_5254_4453_4d50;
const DROP_TAG: u64 = 0x4352_5241_4452_4f50;
const VAL_TAG: u64 = 0x4352_5256_414c_3130;
const CRITIC_INIT_TAG: u64 = 0x4352_5243_494e_4954;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    /// `min(exp(advantage / beta), clip)`.
    Exponential,
    /// 1 when the advantage is strictly positive, else 0.
    Binary,
    /// Always 1; reduces the actor update to behavior cloning.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_clip")]
    pub clip: f64,
}

fn default_beta() -> f64 {
    1.0
}
fn default_clip() -> f64 {
    20.0
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec { kind: FilterKind::Exponential, beta: default_beta(), clip: default_clip() }
    }
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beta <= 0.0 || self.clip <= 0.0 {
            return Err(Error::config(format!(
                "filter beta and clip must be positive, got beta={} clip={}",
                self.beta, self.clip
            )));
        }
        Ok(())
    }
}

/// Weight of one logged action given its estimated advantage. Computed in
/// f64 with the exact exponential; the beta-to-infinity limit of the
/// exponential filter therefore lands exactly on the constant filter once
/// cast to f32.
pub fn filter_weight(advantage: f64, spec: &FilterSpec) -> f64 {
    match spec.kind {
        FilterKind::Exponential => (advantage / spec.beta).exp().min(spec.clip),
        FilterKind::Binary => {
            if advantage > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        FilterKind::Constant => 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrrConfig {
    pub iterations: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub filter: FilterSpec,
    /// Policy draws per state when estimating the advantage baseline.
    #[serde(default = "default_samples")]
    pub advantage_samples: usize,
    /// Policy draws per next state inside the TD target.
    #[serde(default = "default_samples")]
    pub target_samples: usize,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Validate and emit a curve row every this many iterations; the final
    /// iteration always emits one.
    #[serde(default = "default_val_every")]
    pub val_every: u64,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Cosine-decay the learning rate over all iterations.
    #[serde(default = "default_cosine")]
    pub cosine: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_gamma() -> f64 {
    0.6
}
fn default_samples() -> usize {
    4
}
fn default_tau() -> f64 {
    0.01
}
fn default_batch() -> usize {
    128
}
fn default_val_every() -> u64 {
    1000
}
fn default_lr() -> f64 {
    1e-4
}
fn default_cosine() -> bool {
    true
}

impl CrrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::config(format!("crr.gamma must lie in [0, 1), got {}", self.gamma)));
        }
        self.filter.validate()?;
        if self.advantage_samples == 0 || self.target_samples == 0 {
            return Err(Error::config("crr advantage_samples and target_samples must be positive"));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::config(format!("crr.tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.batch_size == 0 || self.val_every == 0 {
            return Err(Error::config("crr batch_size and val_every must be positive"));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::config("crr.learning_rate must be positive"));
        }
        Ok(())
    }

    fn schedule(&self) -> LrSchedule {
        if self.cosine {
            LrSchedule::Cosine { base: self.learning_rate, total_steps: self.iterations }
        } else {
            LrSchedule::Constant { base: self.learning_rate }
        }
    }
}

/// `draws` rows of policy-sampled item ids, one id per state. Draw `j` uses
/// the stream keyed by `key ++ [j]`.
pub fn sample_policy_actions<T: Scalar>(
    policy: &PolicyNetwork<T>,
    states: &[StateSequence],
    draws: usize,
    key: &[u64],
) -> Result<Vec<Vec<u32>>> {
    let probs = policy.distribution(states)?;
    let mut out = Vec::with_capacity(draws);
    for j in 0..draws {
        let mut k = key.to_vec();
        k.push(j as u64);
        let mut rng = seed::rng(&k);
        out.push(probs.iter().map(|row| sample_item(row, &mut rng)).collect());
    }
    Ok(out)
}

/// Q values for several action columns over one shared state encoding,
/// returned as f64 rows aligned with `action_sets`.
pub fn critic_q_sets<T: Scalar>(
    critic: &ValueNetwork<T>,
    states: &[StateSequence],
    action_sets: &[&[u32]],
) -> Result<Vec<Vec<f64>>> {
    let mut g = Graph::new();
    let enc = critic.encode_states(&mut g, states)?;
    let mut out = Vec::with_capacity(action_sets.len());
    for set in action_sets {
        let q = critic.q_values(&mut g, enc, set)?;
        out.push(g.value(q).data().iter().map(|v| v.to_f64()).collect());
    }
    ensure_finite(&g)?;
    Ok(out)
}

/// Advantage of each logged action against the mean critic value of
/// `draws` policy samples at the same state.
pub fn estimate_advantages<T: Scalar>(
    policy: &PolicyNetwork<T>,
    critic: &ValueNetwork<T>,
    states: &[StateSequence],
    actions: &[u32],
    draws: usize,
    key: &[u64],
) -> Result<Vec<f64>> {
    let sampled = sample_policy_actions(policy, states, draws, key)?;
    let mut sets: Vec<&[u32]> = Vec::with_capacity(draws + 1);
    sets.push(actions);
    sets.extend(sampled.iter().map(|s| s.as_slice()));
    let q = critic_q_sets(critic, states, &sets)?;
    Ok((0..states.len())
        .map(|i| {
            let baseline = (1..=draws).map(|j| q[j][i]).sum::<f64>() / draws as f64;
            q[0][i] - baseline
        })
        .collect())
}

/// One-step TD targets: the reward alone at terminals, otherwise the reward
/// plus `gamma` times the mean target-critic value of `draws` actions drawn
/// from the target policy at the next state.
pub fn td_targets<T: Scalar>(
    policy_target: &PolicyNetwork<T>,
    critic_target: &ValueNetwork<T>,
    batch: &[&Transition],
    gamma: f64,
    draws: usize,
    key: &[u64],
) -> Result<Vec<f64>> {
    let next_states: Vec<StateSequence> = batch.iter().map(|t| t.next_state.clone()).collect();
    let sampled = sample_policy_actions(policy_target, &next_states, draws, key)?;
    let sets: Vec<&[u32]> = sampled.iter().map(|s| s.as_slice()).collect();
    let q = critic_q_sets(critic_target, &next_states, &sets)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let r = t.reward as f64;
            if t.terminal {
                r
            } else {
                r + gamma * ((0..draws).map(|j| q[j][i]).sum::<f64>() / draws as f64)
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CrrCurveRow {
    pub iteration: u64,
    /// Mean weighted actor loss since the previous row; absent when every
    /// actor step in the window was skipped for an all-zero filter batch.
    pub actor_loss: Option<f64>,
    pub critic_loss: f64,
    pub mean_filter_weight: f64,
    pub val_hr: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug, Clone)]
struct BestSnapshot<T: Scalar> {
    iteration: u64,
    hr: f64,
    ndcg: f64,
    params: ParamSet<T>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct BestMeta {
    iteration: u64,
    hr: f64,
    ndcg: f64,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
struct StateMeta {
    policy: crate::models::PolicyConfig,
    critic: CriticConfig,
    crr: CrrConfig,
    iteration: u64,
    actor_steps: u64,
    critic_steps: u64,
    skipped_zero_weight: u64,
    best: Option<BestMeta>,
    rows: Vec<CrrCurveRow>,
}

#[derive(Default)]
struct WindowAccum {
    actor_sum: f64,
    actor_n: u64,
    critic_sum: f64,
    weight_sum: f64,
    n: u64,
}

pub struct CrrTrainer<T: Scalar> {
    cfg: CrrConfig,
    policy: TargetPair<PolicyNetwork<T>>,
    critic: TargetPair<ValueNetwork<T>>,
    actor_opt: Adam<T>,
    critic_opt: Adam<T>,
    iteration: u64,
    skipped_zero_weight: u64,
    best: Option<BestSnapshot<T>>,
    rows: Vec<CrrCurveRow>,
}

impl<T: Scalar> CrrTrainer<T> {
    /// Starts the second stage from a pretrained policy: its item embeddings
    /// are frozen and donated to a randomly initialized critic, and both
    /// networks get lagged copies as targets.
    pub fn new(pretrained: PolicyNetwork<T>, critic_cfg: CriticConfig, cfg: CrrConfig) -> Result<Self> {
        cfg.validate()?;
        let pc = pretrained.config();
        if critic_cfg.items != pc.items || critic_cfg.window != pc.window || critic_cfg.dim != pc.dim
        {
            return Err(Error::config(format!(
                "critic items/window/dim ({}, {}, {}) must match the policy ({}, {}, {})",
                critic_cfg.items, critic_cfg.window, critic_cfg.dim, pc.items, pc.window, pc.dim
            )));
        }
        let mut online = pretrained;
        online.freeze_item_embeddings();
        let critic_online = ValueNetwork::new(
            critic_cfg,
            online.item_embeddings(),
            seed::mix(&[cfg.seed, CRITIC_INIT_TAG]),
        )?;
        let policy = TargetPair::new(online, cfg.tau)?;
        let critic = TargetPair::new(critic_online, cfg.tau)?;
        let actor_opt = Adam::new(policy.online.params(), AdamConfig::default());
        let critic_opt = Adam::new(critic.online.params(), AdamConfig::default());
        Ok(CrrTrainer {
            policy,
            critic,
            actor_opt,
            critic_opt,
            cfg,
            iteration: 0,
            skipped_zero_weight: 0,
            best: None,
            rows: Vec::new(),
        })
    }

    pub fn config(&self) -> &CrrConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn skipped_zero_weight(&self) -> u64 {
        self.skipped_zero_weight
    }

    pub fn policy(&self) -> &PolicyNetwork<T> {
        &self.policy.online
    }

    pub fn critic(&self) -> &ValueNetwork<T> {
        &self.critic.online
    }

    /// `(iteration, hr, ndcg)` of the best validation so far.
    pub fn best_info(&self) -> Option<(u64, f64, f64)> {
        self.best.as_ref().map(|b| (b.iteration, b.hr, b.ndcg))
    }

    /// The policy at the best validation point, or the current one when no
    /// validation has run (in particular, the pretrained input when
    /// `iterations` is 0).
    pub fn best_policy(&self) -> PolicyNetwork<T> {
        let mut p = self.policy.online.clone();
        if let Some(b) = &self.best {
            p.params_mut().copy_values_from(&b.params);
        }
        p
    }

    fn val_seed(&self) -> u64 {
        seed::mix(&[self.cfg.seed, VAL_TAG])
    }

    /// Trains up to the next validation boundary (a multiple of `val_every`
    /// or the final iteration) and returns that window's curve row, or
    /// `None` once all iterations have run. Passing an empty validation set
    /// skips scoring and best-policy tracking.
    pub fn train_until_next_row(
        &mut self,
        data: &[Transition],
        val: &[EvalSample],
    ) -> Result<Option<CrrCurveRow>> {
        if self.iteration >= self.cfg.iterations {
            return Ok(None);
        }
        if data.is_empty() {
            return Err(Error::data("no transitions to train on"));
        }
        let boundary = (self.iteration / self.cfg.val_every + 1) * self.cfg.val_every;
        let until = boundary.min(self.cfg.iterations);
        let mut acc = WindowAccum::default();
        while self.iteration < until {
            let k = self.iteration + 1;
            self.step(data, k, &mut acc)?;
            self.iteration = k;
        }

        let mut row = CrrCurveRow {
            iteration: self.iteration,
            actor_loss: (acc.actor_n > 0).then(|| acc.actor_sum / acc.actor_n as f64),
            critic_loss: acc.critic_sum / acc.n as f64,
            mean_filter_weight: acc.weight_sum / acc.n as f64,
            val_hr: None,
            val_ndcg: None,
        };
        if !val.is_empty() {
            let outcome = evaluate_policy(&self.policy.online, val, PoolSelection::Rand, self.val_seed(), 10)?;
            let m = outcome.report.rand.expect("rand metrics requested");
            row.val_hr = Some(m.hr);
            row.val_ndcg = Some(m.ndcg);
            if self.best.as_ref().is_none_or(|b| m.hr > b.hr) {
                self.best = Some(BestSnapshot {
                    iteration: self.iteration,
                    hr: m.hr,
                    ndcg: m.ndcg,
                    params: self.policy.online.params().clone(),
                });
            }
        }
        self.rows.push(row.clone());
        Ok(Some(row))
    }

    /// Every curve row produced so far, including those before a resume.
    pub fn rows(&self) -> &[CrrCurveRow] {
        &self.rows
    }

    /// Runs every remaining iteration, collecting one row per validation
    /// window.
    pub fn run(&mut self, data: &[Transition], val: &[EvalSample]) -> Result<Vec<CrrCurveRow>> {
        let mut rows = Vec::new();
        while let Some(row) = self.train_until_next_row(data, val)? {
            rows.push(row);
        }
        Ok(rows)
    }

    fn step(&mut self, data: &[Transition], k: u64, acc: &mut WindowAccum) -> Result<()> {
        let mut brng = seed::rng(&[self.cfg.seed, BATCH_TAG, k]);
        let batch: Vec<&Transition> =
            (0..self.cfg.batch_size).map(|_| &data[brng.gen_range(0..data.len())]).collect();
        let states: Vec<StateSequence> = batch.iter().map(|t| t.state.clone()).collect();
        let actions: Vec<u32> = batch.iter().map(|t| t.action).collect();

        let advantages = estimate_advantages(
            &self.policy.online,
            &self.critic.online,
            &states,
            &actions,
            self.cfg.advantage_samples,
            &[self.cfg.seed, ADV_TAG, k],
        )?;
        let weights_f64: Vec<f64> =
            advantages.iter().map(|&a| filter_weight(a, &self.cfg.filter)).collect();
        let mean_w = weights_f64.iter().sum::<f64>() / weights_f64.len() as f64;
        let weights: Vec<T> = weights_f64.iter().map(|&w| T::from_f64(w)).collect();
        let lr = self.cfg.schedule().lr_at(k - 1);
        let diag = |what: &str, e: offrec_autograd::Error| {
            Error::numeric(format!(
                "{what} failed at iteration {k} (lr {lr:.3e}, mean filter weight {mean_w:.3e}): {e}"
            ))
        };

        if weights.iter().all(|w| *w == T::ZERO) {
            self.skipped_zero_weight += 1;
        } else {
            let dropout = self.policy.online.config().dropout;
            let mut drop_rng = seed::rng(&[self.cfg.seed, DROP_TAG, k]);
            self.policy.online.params_mut().zero_grads();
            let mut g = Graph::new();
            let logits = self.policy.online.forward(
                &mut g,
                &states,
                &mut ForwardMode::Train { dropout, rng: &mut drop_rng },
            )?;
            let targets: Vec<u32> = actions.iter().map(|a| a - 1).collect();
            let loss = g.cross_entropy_mean(logits, &targets, Some(&weights));
            let loss_val = g.try_scalar(loss).map_err(|e| diag("actor loss", e))?;
            let grads = g.backward(loss).map_err(|e| diag("actor backward", e))?;
            self.policy.online.params_mut().accumulate(&grads);
            self.actor_opt.step(self.policy.online.params_mut(), lr)?;
            acc.actor_sum += loss_val.to_f64();
            acc.actor_n += 1;
        }

        let targets = td_targets(
            &self.policy.target,
            &self.critic.target,
            &batch,
            self.cfg.gamma,
            self.cfg.target_samples,
            &[self.cfg.seed, TD_TAG, k],
        )?;
        let targets_t: Vec<T> = targets.iter().map(|&y| T::from_f64(y)).collect();
        self.critic.online.params_mut().zero_grads();
        let mut g = Graph::new();
        let enc = self.critic.online.encode_states(&mut g, &states)?;
        let q = self.critic.online.q_values(&mut g, enc, &actions)?;
        let loss = g.mse_mean(q, &targets_t);
        let loss_val = g.try_scalar(loss).map_err(|e| diag("critic loss", e))?;
        let grads = g.backward(loss).map_err(|e| diag("critic backward", e))?;
        self.critic.online.params_mut().accumulate(&grads);
        self.critic_opt.step(self.critic.online.params_mut(), lr)?;

        self.policy.soft_update();
        self.critic.soft_update();

        acc.critic_sum += loss_val.to_f64();
        acc.weight_sum += mean_w;
        acc.n += 1;
        Ok(())
    }

    /// Writes everything a resumed run needs: all four networks, both
    /// optimizer states, the best-validation snapshot and the counters.
    pub fn save_state(&self, path: &Path) -> Result<()> {
        let actor_state = self.actor_opt.export_state(self.policy.online.params());
        let critic_state = self.critic_opt.export_state(self.critic.online.params());
        let mut entries: Vec<(String, &Tensor<T>, bool)> = Vec::new();
        for (prefix, params) in [
            ("policy.", self.policy.online.params()),
            ("policy_target.", self.policy.target.params()),
            ("critic.", self.critic.online.params()),
            ("critic_target.", self.critic.target.params()),
        ] {
            for (_, p) in params.iter() {
                entries.push((format!("{prefix}{}", p.name), &p.value, p.trainable));
            }
        }
        for (name, t) in &actor_state {
            entries.push((format!("actor_opt.{name}"), t, false));
        }
        for (name, t) in &critic_state {
            entries.push((format!("critic_opt.{name}"), t, false));
        }
        if let Some(b) = &self.best {
            for (_, p) in b.params.iter() {
                entries.push((format!("best.{}", p.name), &p.value, false));
            }
        }
        let meta = StateMeta {
            policy: self.policy.online.config().clone(),
            critic: self.critic.online.config().clone(),
            crr: self.cfg.clone(),
            iteration: self.iteration,
            actor_steps: self.actor_opt.step_count(),
            critic_steps: self.critic_opt.step_count(),
            skipped_zero_weight: self.skipped_zero_weight,
            best: self.best.as_ref().map(|b| BestMeta {
                iteration: b.iteration,
                hr: b.hr,
                ndcg: b.ndcg,
            }),
            rows: self.rows.clone(),
        };
        let meta = serde_json::to_value(&meta)
            .map_err(|e| Error::data(format!("trainer meta encode: {e}")))?;
        checkpoint::save(path, &entries, &meta)?;
        Ok(())
    }

    pub fn resume(path: &Path) -> Result<Self> {
        let loaded = checkpoint::load::<T>(path)?;
        let meta: StateMeta = serde_json::from_value(loaded.meta.clone())
            .map_err(|e| Error::data(format!("{}: trainer meta: {e}", path.display())))?;
        let map = loaded.tensor_map();

        let fresh_policy = || -> Result<PolicyNetwork<T>> {
            let mut p = PolicyNetwork::new(meta.policy.clone(), 0)?;
            p.freeze_item_embeddings();
            Ok(p)
        };
        let mut policy_online = fresh_policy()?;
        fill_prefixed(policy_online.params_mut(), &map, "policy.")?;
        let mut policy_target = fresh_policy()?;
        fill_prefixed(policy_target.params_mut(), &map, "policy_target.")?;

        let table = Tensor::zeros([meta.critic.items + 1, meta.critic.dim]);
        let mut critic_online = ValueNetwork::new(meta.critic.clone(), table.clone(), 0)?;
        fill_prefixed(critic_online.params_mut(), &map, "critic.")?;
        let mut critic_target = ValueNetwork::new(meta.critic.clone(), table, 0)?;
        fill_prefixed(critic_target.params_mut(), &map, "critic_target.")?;

        let strip = |prefix: &str| -> HashMap<String, Tensor<T>> {
            map.iter()
                .filter_map(|(k, v)| k.strip_prefix(prefix).map(|r| (r.to_string(), v.clone())))
                .collect()
        };
        let actor_opt = Adam::restore_state(
            policy_online.params(),
            AdamConfig::default(),
            meta.actor_steps,
            &strip("actor_opt."),
        )?;
        let critic_opt = Adam::restore_state(
            critic_online.params(),
            AdamConfig::default(),
            meta.critic_steps,
            &strip("critic_opt."),
        )?;
        let best = match meta.best {
            None => None,
            Some(b) => {
                let mut params = policy_online.params().clone();
                fill_prefixed(&mut params, &map, "best.")?;
                Some(BestSnapshot { iteration: b.iteration, hr: b.hr, ndcg: b.ndcg, params })
            }
        };
        Ok(CrrTrainer {
            policy: TargetPair::from_parts(policy_online, policy_target, meta.crr.tau)?,
            critic: TargetPair::from_parts(critic_online, critic_target, meta.crr.tau)?,
            actor_opt,
            critic_opt,
            cfg: meta.crr,
            iteration: meta.iteration,
            skipped_zero_weight: meta.skipped_zero_weight,
            best,
            rows: meta.rows,
        })
    }
}

pub fn write_crr_curve_csv(path: &Path, rows: &[CrrCurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::data(format!("curve write: {e}"));
    w.write_record(["iteration", "actor_loss", "critic_loss", "mean_filter_weight", "val_hr", "val_ndcg"])
        .map_err(io_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            opt(r.actor_loss),
            r.critic_loss.to_string(),
            r.mean_filter_weight.to_string(),
            opt(r.val_hr),
            opt(r.val_ndcg),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Projects the policy onto a tabular MDP: each state becomes a length-1
/// window holding its item id, and the item distribution is renormalized
/// over the action ids.
pub fn tabular_policy_of<T: Scalar>(
    policy: &PolicyNetwork<T>,
    mdp: &TabularMdp,
) -> Result<TabularPolicy> {
    if policy.config().window != 1 {
        return Err(Error::config("tabular projection expects a window of 1"));
    }
    let states: Vec<StateSequence> =
        (0..mdp.states).map(|s| StateSequence::from_ids(vec![mdp.state_id(s)])).collect();
    let dist = policy.distribution(&states)?;
    let probs = dist
        .iter()
        .map(|row| {
            let raw: Vec<f64> =
                (0..mdp.actions).map(|a| row[(mdp.action_id(a) - 1) as usize].to_f64()).collect();
            let z: f64 = raw.iter().sum();
            raw.iter().map(|p| p / z).collect()
        })
        .collect();
    let policy = TabularPolicy { probs };
    policy.validate(mdp)?;
    Ok(policy)
}
