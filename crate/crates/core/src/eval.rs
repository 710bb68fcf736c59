//! Ranking evaluation on held-out positive interactions.
//!
//! Each positive transition becomes one sample: score every candidate item
//! with the policy and find the rank of the item the user actually took
//! next. Candidates are the items the user has not touched yet, either all
//! of them or 100 drawn at random, plus the true item. Ties rank by
//! ascending item id, so results are reproducible across runs and platforms.
//!
//! The production rank is computed by counting; [`reference`] recomputes it
//! by fully sorting the pool. The two routes share no code and are held to
//! exact agreement in tests.

use std::collections::BTreeMap;

use offrec_autograd::{seed, Scalar};
use rand::Rng;

use crate::data::{EventKind, Transition};
use crate::error::{Error, Result};
use crate::models::PolicyNetwork;

const POOL_TAG: u64 = 0x5241_4e44_504f_4f4c;
const SCORE_BATCH: usize = 256;

/// One held-out positive interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub state: crate::data::StateSequence,
    /// The item the user consumed next; the ranking target.
    pub true_item: u32,
    pub event: Option<EventKind>,
    /// Items already interacted with before this step, sorted ascending.
    pub seen: Vec<u32>,
}

/// Builds samples from an episode stream. Episodes are delimited by the
/// terminal flag; within one, the seen set starts from the items visible in
/// the first state window and grows by every taken action, positive or not.
/// Only positive transitions yield samples.
pub fn eval_samples_from_transitions(transitions: &[Transition]) -> Vec<EvalSample> {
    let mut out = Vec::new();
    let mut seen: std::collections::BTreeSet<u32> = std::collections::BTreeSet::new();
    let mut fresh = true;
    for t in transitions {
        if fresh {
            seen = t.state.real_ids().collect();
            fresh = false;
        }
        if t.reward > 0.0 {
            out.push(EvalSample {
                state: t.state.clone(),
                true_item: t.action,
                event: t.event,
                seen: seen.iter().copied().collect(),
            });
        }
        seen.insert(t.action);
        if t.terminal {
            fresh = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolSelection {
    All,
    Rand,
    Both,
}

impl PoolSelection {
    fn wants_all(self) -> bool {
        matches!(self, PoolSelection::All | PoolSelection::Both)
    }
    fn wants_rand(self) -> bool {
        matches!(self, PoolSelection::Rand | PoolSelection::Both)
    }
}

/// Catalog items the sample's user has never touched, excluding the true
/// item, ascending.
pub fn untouched_candidates(sample: &EvalSample, items: usize) -> Vec<u32> {
    (1..=items as u32)
        .filter(|i| *i != sample.true_item && sample.seen.binary_search(i).is_err())
        .collect()
}

/// Every untouched item plus the true one.
pub fn build_all_pool(sample: &EvalSample, items: usize) -> Vec<u32> {
    let mut pool = untouched_candidates(sample, items);
    pool.push(sample.true_item);
    pool
}

/// 100 untouched items drawn without replacement plus the true one. When
/// fewer than 100 exist the pool shrinks to all of them and the flag is set.
pub fn build_rand_pool(sample: &EvalSample, items: usize, rng: &mut impl Rng) -> (Vec<u32>, bool) {
    const DRAW: usize = 100;
    let candidates = untouched_candidates(sample, items);
    let (mut pool, shrunk) = if candidates.len() <= DRAW {
        (candidates, true)
    } else {
        let picked = rand::seq::index::sample(rng, candidates.len(), DRAW);
        (picked.iter().map(|i| candidates[i]).collect(), false)
    };
    pool.push(sample.true_item);
    (pool, shrunk)
}

/// Rank of the true item within the pool: one plus the number of candidates
/// that score strictly higher, or equal with a smaller id. `scores[j]` is
/// the score of item `j + 1` and must cover every pool id.
pub fn rank_of_true(scores: &[f64], pool: &[u32], true_item: u32) -> usize {
    let st = scores[(true_item - 1) as usize];
    let mut ahead = 0usize;
    for &i in pool {
        if i == true_item {
            continue;
        }
        let s = scores[(i - 1) as usize];
        if s > st || (s == st && i < true_item) {
            ahead += 1;
        }
    }
    ahead + 1
}

/// The `k` best pool items by descending score, ties by ascending id.
pub fn top_k(scores: &[f64], pool: &[u32], k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = pool.to_vec();
    order.sort_by(|&a, &b| {
        let (sa, sb) = (scores[(a - 1) as usize], scores[(b - 1) as usize]);
        sb.total_cmp(&sa).then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

pub fn hr_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// With a single relevant item the ideal DCG is 1, so the normalized gain
/// is just the positional discount.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoolMetrics {
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    /// Number of positive samples aggregated.
    pub n_pos: usize,
    pub k: usize,
    /// Metrics against the full untouched catalog.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub all: Option<PoolMetrics>,
    /// Metrics against the 100-candidate sampled pool.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rand: Option<PoolMetrics>,
    /// Samples whose sampled pool had fewer than 100 candidates available.
    pub shrunk_rand_pools: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_event: Option<BTreeMap<String, MetricReport>>,
}

/// Per-sample evaluation record, written to the audit file by the CLI.
#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub sample_id: usize,
    pub event: Option<EventKind>,
    pub rank_all: Option<usize>,
    pub rank_rand: Option<usize>,
    pub shrunk_rand_pool: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub report: MetricReport,
    pub audit: Vec<AuditRow>,
}

fn aggregate(rows: &[AuditRow], selection: PoolSelection, k: usize) -> MetricReport {
    let n = rows.len();
    let mean = |ranks: &mut dyn Iterator<Item = usize>, f: fn(usize, usize) -> f64| {
        ranks.map(|r| f(r, k)).sum::<f64>() / n as f64
    };
    let pool_metrics = |pick: fn(&AuditRow) -> Option<usize>| PoolMetrics {
        hr: mean(&mut rows.iter().filter_map(pick), hr_at_k),
        ndcg: mean(&mut rows.iter().filter_map(pick), ndcg_at_k),
    };
    MetricReport {
        n_pos: n,
        k,
        all: selection.wants_all().then(|| pool_metrics(|r| r.rank_all)),
        rand: selection.wants_rand().then(|| pool_metrics(|r| r.rank_rand)),
        shrunk_rand_pools: rows.iter().filter(|r| r.shrunk_rand_pool).count(),
        per_event: None,
    }
}

/// Scores every sample with the policy and aggregates ranking metrics.
/// Sampled pools are keyed by `(seed, sample index)`, so a fixed seed gives
/// a fixed result regardless of batching or thread count.
pub fn evaluate_policy<T: Scalar>(
    policy: &PolicyNetwork<T>,
    samples: &[EvalSample],
    selection: PoolSelection,
    eval_seed: u64,
    k: usize,
) -> Result<EvalOutcome> {
    if samples.is_empty() {
        return Err(Error::data("no positive samples to evaluate"));
    }
    if k == 0 {
        return Err(Error::config("metric cutoff k must be positive"));
    }
    let items = policy.config().items;
    let mut audit = Vec::with_capacity(samples.len());
    for (base, chunk) in samples.chunks(SCORE_BATCH).enumerate() {
        let states: Vec<_> = chunk.iter().map(|s| s.state.clone()).collect();
        let logits = policy.logits(&states)?;
        for (off, (sample, row)) in chunk.iter().zip(&logits).enumerate() {
            let sample_id = base * SCORE_BATCH + off;
            if sample.true_item == 0 || sample.true_item as usize > items {
                return Err(Error::data(format!(
                    "sample {sample_id}: true item {} outside catalog 1..={items}",
                    sample.true_item
                )));
            }
            if sample.seen.iter().any(|&i| i == 0 || i as usize > items) {
                return Err(Error::data(format!("sample {sample_id}: seen item outside catalog")));
            }
            let scores: Vec<f64> = row.iter().map(|v| v.to_f64()).collect();
            let rank_all = selection.wants_all().then(|| {
                let pool = build_all_pool(sample, items);
                rank_of_true(&scores, &pool, sample.true_item)
            });
            let (rank_rand, shrunk) = if selection.wants_rand() {
                let mut rng = seed::rng(&[eval_seed, POOL_TAG, sample_id as u64]);
                let (pool, shrunk) = build_rand_pool(sample, items, &mut rng);
                (Some(rank_of_true(&scores, &pool, sample.true_item)), shrunk)
            } else {
                (None, false)
            };
            audit.push(AuditRow {
                sample_id,
                event: sample.event,
                rank_all,
                rank_rand,
                shrunk_rand_pool: shrunk,
            });
        }
    }

    let mut report = aggregate(&audit, selection, k);
    let mut by_event: BTreeMap<String, Vec<AuditRow>> = BTreeMap::new();
    for row in &audit {
        if let Some(e) = row.event {
            by_event.entry(e.to_string()).or_default().push(row.clone());
        }
    }
    if !by_event.is_empty() {
        report.per_event = Some(
            by_event.into_iter().map(|(e, rows)| (e, aggregate(&rows, selection, k))).collect(),
        );
    }
    Ok(EvalOutcome { report, audit })
}

pub fn write_audit_csv(path: &std::path::Path, rows: &[AuditRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
    let io_err = |e: csv::Error| Error::data(format!("audit write: {e}"));
    w.write_record(["sample_id", "event", "rank_all", "rank_rand", "shrunk_rand_pool"])
        .map_err(io_err)?;
    let opt = |v: Option<usize>| v.map(|r| r.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.sample_id.to_string(),
            r.event.map(|e| e.to_string()).unwrap_or_default(),
            opt(r.rank_all),
            opt(r.rank_rand),
            r.shrunk_rand_pool.to_string(),
        ])
        .map_err(io_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Independent recomputation of the ranking metrics by fully sorting the
/// candidate pool. Shares no logic with the counting route above.
pub mod reference {
    /// Rank of the true item after sorting the whole pool by descending
    /// score with ascending-id ties.
    pub fn rank_by_full_sort(scores: &[f64], pool: &[u32], true_item: u32) -> usize {
        let mut order: Vec<u32> = pool.to_vec();
        order.sort_by(|&a, &b| {
            let (sa, sb) = (scores[(a - 1) as usize], scores[(b - 1) as usize]);
            sb.total_cmp(&sa).then(a.cmp(&b))
        });
        order.iter().position(|&i| i == true_item).expect("true item present in pool") + 1
    }

    /// HR from top-k membership and NDCG from the position in the sorted
    /// prefix, never from a precomputed rank.
    pub fn metrics_from_sorted_prefix(
        scores: &[f64],
        pool: &[u32],
        true_item: u32,
        k: usize,
    ) -> (f64, f64) {
        let top = super::top_k(scores, pool, k);
        match top.iter().position(|&i| i == true_item) {
            Some(pos) => (1.0, 1.0 / ((pos + 2) as f64).log2()),
            None => (0.0, 0.0),
        }
    }
}
