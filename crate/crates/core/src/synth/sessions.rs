//! Planted-structure synthetic interaction logs.
//!
//! Each actor's stream follows a deterministic next-item rule with
//! probability `1 - noise` and jumps to a uniform item otherwise, so a
//! learned policy has a known ranking ceiling to be measured against.

use std::path::Path;

use offrec_autograd::seed;
use rand::Rng;

use crate::data::{EventKind, Feedback, InteractionRecord, LogSchema};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SessionGenConfig {
    /// Catalog size I.
    pub items: usize,
    /// Number of actors (sessions or users).
    pub actors: usize,
    /// Inclusive bounds on per-actor stream length.
    pub min_len: usize,
    pub max_len: usize,
    /// Probability of ignoring the rule and drawing uniformly.
    pub noise: f64,
    /// Next-item rule on zero-based items: `next = (mult * cur + add) % items`.
    pub rule_mult: u64,
    pub rule_add: u64,
    /// Sessions schema: probability an event is a purchase instead of a
    /// click. Ratings schema: probability a rating is positive (4.5 vs 2.0).
    pub positive_prob: f64,
    pub schema: LogSchema,
    pub seed: u64,
}

impl SessionGenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.items < 2 {
            return Err(Error::config(format!("synth.items must be at least 2, got {}", self.items)));
        }
        if self.actors == 0 {
            return Err(Error::config("synth.actors must be positive"));
        }
        if self.min_len < 2 || self.min_len > self.max_len {
            return Err(Error::config(format!(
                "synth stream lengths must satisfy 2 <= min_len <= max_len, got {}..{}",
                self.min_len, self.max_len
            )));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::config(format!("synth.noise must lie in [0, 1], got {}", self.noise)));
        }
        if !(0.0..=1.0).contains(&self.positive_prob) {
            return Err(Error::config(format!(
                "synth.positive_prob must lie in [0, 1], got {}",
                self.positive_prob
            )));
        }
        Ok(())
    }

    /// The planted successor of a one-based internal item id.
    pub fn rule_next(&self, item: u32) -> u32 {
        debug_assert!(item >= 1 && item as usize <= self.items);
        let cur = (item - 1) as u64;
        ((self.rule_mult * cur + self.rule_add) % self.items as u64) as u32 + 1
    }
}

impl Default for SessionGenConfig {
    fn default() -> Self {
        SessionGenConfig {
            items: 200,
            actors: 2000,
            min_len: 20,
            max_len: 32,
            noise: 0.2,
            rule_mult: 17,
            rule_add: 41,
            positive_prob: 0.1,
            schema: LogSchema::Sessions,
            seed: 0,
        }
    }
}

/// Best-case HR@k against the planted rule: the rule fires with probability
/// `1 - noise`, and a noise target can still land in a top-k list of `items`
/// candidates by chance.
pub fn rule_ceiling(cfg: &SessionGenConfig, k: usize) -> f64 {
    (1.0 - cfg.noise) + cfg.noise * (k as f64 / cfg.items as f64)
}

/// Generates the raw log. Actor `i` occupies the contiguous timestamp block
/// starting at `i * (max_len + 1)`, so a chronological split cuts between
/// actors rather than through them and raw item ids are plain one-based
/// integers (the catalog stays an identity map in file order).
pub fn generate_synthetic_sessions(cfg: &SessionGenConfig) -> Result<Vec<InteractionRecord>> {
    cfg.validate()?;
    let root = seed::mix(&[cfg.seed, 0x53455353]);
    let mut out = Vec::new();
    for actor in 0..cfg.actors {
        let mut rng = seed::rng(&[root, actor as u64]);
        let len = rng.gen_range(cfg.min_len..=cfg.max_len);
        let base_ts = (actor * (cfg.max_len + 1)) as i64;
        let mut cur: u32 = rng.gen_range(1..=cfg.items as u32);
        for step in 0..len {
            if step > 0 {
                cur = if rng.gen::<f64>() < cfg.noise {
                    rng.gen_range(1..=cfg.items as u32)
                } else {
                    cfg.rule_next(cur)
                };
            }
            let positive = rng.gen::<f64>() < cfg.positive_prob;
            let feedback = match cfg.schema {
                LogSchema::Sessions => Feedback::Event(if positive {
                    EventKind::Purchase
                } else {
                    EventKind::Click
                }),
                LogSchema::Ratings => Feedback::Rating(if positive { 4.5 } else { 2.0 }),
            };
            out.push(InteractionRecord {
                actor: (actor + 1).to_string(),
                item: cur.to_string(),
                feedback,
                timestamp: base_ts + step as i64,
            });
        }
    }
    Ok(out)
}

/// Writes records in the raw CSV layout matching their schema.
pub fn write_log_csv(path: &Path, records: &[InteractionRecord], schema: LogSchema) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::data(format!("{}: {e}", path.display()));
    match schema {
        LogSchema::Ratings => {
            w.write_record(["userId", "itemId", "rating", "timestamp"]).map_err(io_err)?;
            for r in records {
                let rating = match r.feedback {
                    Feedback::Rating(v) => v,
                    Feedback::Event(_) => {
                        return Err(Error::data("event feedback cannot be written as ratings"))
                    }
                };
                w.write_record([
                    r.actor.as_str(),
                    r.item.as_str(),
                    &rating.to_string(),
                    &r.timestamp.to_string(),
                ])
                .map_err(io_err)?;
            }
        }
        LogSchema::Sessions => {
            w.write_record(["sessionId", "timestamp", "itemId", "event"]).map_err(io_err)?;
            for r in records {
                let event = match r.feedback {
                    Feedback::Event(e) => e.to_string(),
                    Feedback::Rating(_) => {
                        return Err(Error::data("rating feedback cannot be written as sessions"))
                    }
                };
                w.write_record([
                    r.actor.as_str(),
                    &r.timestamp.to_string(),
                    r.item.as_str(),
                    &event,
                ])
                .map_err(io_err)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
