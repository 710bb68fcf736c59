//! Supervised next-item pretraining.
//!
//! Trains the policy with cross entropy on positive transitions only: the
//! target class for a state is the item the user consumed next. Validation
//! runs on ranking metrics against sampled candidate pools, and the
//! parameters that scored the best validation HR are restored at the end,
//! with ties keeping the earlier epoch.

use std::path::Path;

use offrec_autograd::{seed, Adam, AdamConfig, Graph, LrSchedule, ParamSet, Scalar};
use rand::seq::SliceRandom;

use crate::data::Transition;
use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, EvalSample, PoolSelection};
use crate::models::{ForwardMode, NetworkParams, PolicyNetwork};

const SHUFFLE_TAG: u64 = 0x5052_4553_4855_4646;
const DROP_TAG: u64 = 0x5052_4544_524f_5055;
const VAL_TAG: u64 = 0x5052_4556_414c_3130;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub epochs: usize,
    /// Overrides the policy's own dropout rate when set.
    #[serde(default)]
    pub dropout: Option<f64>,
    /// Validate every this many epochs; the final epoch always validates.
    #[serde(default = "default_val_every")]
    pub val_every: usize,
    /// Cosine-decay the learning rate over all steps; otherwise constant.
    #[serde(default = "default_cosine")]
    pub cosine: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    128
}
fn default_val_every() -> usize {
    1
}
fn default_cosine() -> bool {
    true
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::config("pretrain.learning_rate must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.val_every == 0 {
            return Err(Error::config(
                "pretrain batch_size, epochs and val_every must be positive",
            ));
        }
        if let Some(d) = self.dropout {
            if !(0.0..1.0).contains(&d) {
                return Err(Error::config(format!("pretrain.dropout must lie in [0, 1), got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct PretrainCurveRow {
    pub epoch: usize,
    /// Sample-weighted mean training loss over the epoch, measured before
    /// each optimizer step.
    pub train_loss: f64,
    pub val_hr: Option<f64>,
    pub val_ndcg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub best_epoch: usize,
    pub best_hr: f64,
    pub best_ndcg: f64,
    pub curve: Vec<PretrainCurveRow>,
}

/// Runs pretraining in place, leaving `policy` at its best-validation
/// parameters.
pub fn pretrain<T: Scalar>(
    policy: &mut PolicyNetwork<T>,
    train: &[Transition],
    val: &[EvalSample],
    cfg: &PretrainConfig,
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let positives: Vec<&Transition> = train.iter().filter(|t| t.reward > 0.0).collect();
    if positives.is_empty() {
        return Err(Error::data("no positive transitions to pretrain on"));
    }
    if val.is_empty() {
        return Err(Error::data("empty validation set"));
    }
    let dropout = cfg.dropout.unwrap_or(policy.config().dropout);
    let batches_per_epoch = positives.len().div_ceil(cfg.batch_size);
    let schedule = if cfg.cosine {
        LrSchedule::Cosine {
            base: cfg.learning_rate,
            total_steps: (cfg.epochs * batches_per_epoch) as u64,
        }
    } else {
        LrSchedule::Constant { base: cfg.learning_rate }
    };
    let val_seed = seed::mix(&[cfg.seed, VAL_TAG]);

    let mut opt = Adam::new(policy.params(), AdamConfig::default());
    let mut step = 0u64;
    let mut curve = Vec::new();
    let mut best: Option<(usize, f64, f64, ParamSet<T>)> = None;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..positives.len()).collect();
        order.shuffle(&mut seed::rng(&[cfg.seed, SHUFFLE_TAG, epoch as u64]));

        let mut loss_sum = 0.0;
        for (bi, batch) in order.chunks(cfg.batch_size).enumerate() {
            let states: Vec<_> = batch.iter().map(|&i| positives[i].state.clone()).collect();
            let targets: Vec<u32> = batch.iter().map(|&i| positives[i].action - 1).collect();
            let mut drop_rng = seed::rng(&[cfg.seed, DROP_TAG, epoch as u64, bi as u64]);

            policy.params_mut().zero_grads();
            let mut g = Graph::new();
            let logits = policy.forward(
                &mut g,
                &states,
                &mut ForwardMode::Train { dropout, rng: &mut drop_rng },
            )?;
            let loss = g.cross_entropy_mean(logits, &targets, None);
            let loss_val = g.try_scalar(loss).map_err(|e| {
                Error::numeric(format!("pretrain epoch {epoch} batch {bi}: {e}"))
            })?;
            let grads = g.backward(loss).map_err(|e| {
                Error::numeric(format!("pretrain epoch {epoch} batch {bi}: {e}"))
            })?;
            policy.params_mut().accumulate(&grads);
            opt.step(policy.params_mut(), schedule.lr_at(step))?;
            step += 1;
            loss_sum += loss_val.to_f64() * batch.len() as f64;
        }

        let mut row = PretrainCurveRow {
            epoch,
            train_loss: loss_sum / positives.len() as f64,
            val_hr: None,
            val_ndcg: None,
        };
        if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            let outcome = evaluate_policy(policy, val, PoolSelection::Rand, val_seed, 10)?;
            let m = outcome.report.rand.expect("rand metrics requested");
            row.val_hr = Some(m.hr);
            row.val_ndcg = Some(m.ndcg);
            if best.as_ref().is_none_or(|(_, hr, _, _)| m.hr > *hr) {
                best = Some((epoch, m.hr, m.ndcg, policy.params().clone()));
            }
        }
        curve.push(row);
    }

    let (best_epoch, best_hr, best_ndcg, snapshot) = best.expect("final epoch always validates");
    policy.params_mut().copy_values_from(&snapshot);
    Ok(PretrainOutcome { best_epoch, best_hr, best_ndcg, curve })
}

pub fn write_curve_csv(path: &Path, curve: &[PretrainCurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::data(format!("curve write: {e}"));
    w.write_record(["epoch", "train_loss", "val_hr", "val_ndcg"]).map_err(io_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in curve {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            opt(r.val_hr),
            opt(r.val_ndcg),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}
