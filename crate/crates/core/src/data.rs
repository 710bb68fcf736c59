//! Log ingestion and offline dataset construction.
//!
//! Raw interaction logs become the offline dataset of (state, action,
//! reward, next state) transitions: parse, drop simultaneous duplicates,
//! map feedback to rewards, split chronologically, then walk each actor's
//! stream under the deterministic transition rule (positive reward shifts
//! the action into the window, zero reward leaves the window unchanged).

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Reserved window filler; never assigned to a real item.
pub const PAD: u32 = 0;

/// Which raw CSV layout a log file uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogSchema {
    /// `userId,itemId,rating,timestamp`
    Ratings,
    /// `sessionId,timestamp,itemId,event`
    Sessions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Click,
    Purchase,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Click => write!(f, "click"),
            EventKind::Purchase => write!(f, "purchase"),
        }
    }
}

impl std::str::FromStr for EventKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "click" => Ok(EventKind::Click),
            "purchase" => Ok(EventKind::Purchase),
            other => Err(Error::data(format!("unknown event type `{other}`"))),
        }
    }
}

/// Feedback attached to one log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Feedback {
    Rating(f64),
    Event(EventKind),
}

/// One raw log row. `actor` is the user id for ratings data and the session
/// id for session data; states never cross actor boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub actor: String,
    pub item: String,
    pub feedback: Feedback,
    pub timestamp: i64,
}

/// How raw feedback maps to a scalar reward.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum RewardSpec {
    /// rating >= threshold -> 1, else 0.
    RatingThreshold { threshold: f64 },
    /// Fixed value per event type.
    EventValued { click: f32, purchase: f32 },
}

impl RewardSpec {
    pub fn rating_default() -> Self {
        RewardSpec::RatingThreshold { threshold: 3.5 }
    }

    pub fn event_default() -> Self {
        RewardSpec::EventValued { click: 1.0, purchase: 3.0 }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RewardSpec::RatingThreshold { threshold } => {
                if !threshold.is_finite() {
                    return Err(Error::config(format!(
                        "reward.threshold must be finite, got {threshold}"
                    )));
                }
            }
            RewardSpec::EventValued { click, purchase } => {
                if !click.is_finite() || !purchase.is_finite() {
                    return Err(Error::config("reward event values must be finite"));
                }
            }
        }
        Ok(())
    }

    /// Maps one record's feedback to its reward scalar.
    pub fn map_reward(&self, feedback: &Feedback) -> Result<f32> {
        match (self, feedback) {
            (RewardSpec::RatingThreshold { threshold }, Feedback::Rating(r)) => {
                Ok(if *r >= *threshold { 1.0 } else { 0.0 })
            }
            (RewardSpec::EventValued { click, .. }, Feedback::Event(EventKind::Click)) => Ok(*click),
            (RewardSpec::EventValued { purchase, .. }, Feedback::Event(EventKind::Purchase)) => {
                Ok(*purchase)
            }
            (spec, fb) => Err(Error::data(format!(
                "feedback {fb:?} does not match reward scheme {spec:?}"
            ))),
        }
    }
}

/// Chronological train/validation/test fractions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("split.train", self.train),
            ("split.validation", self.validation),
            ("split.test", self.test),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        let sum = self.train + self.validation + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!("split fractions must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Bijection between raw item ids and contiguous internal indices in
/// `[1, I]`; index 0 stays reserved for [`PAD`].
#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    raw: Vec<String>,
    index: HashMap<String, u32>,
}

impl Catalog {
    /// Assigns internal ids in order of first appearance.
    pub fn build(records: &[InteractionRecord]) -> Catalog {
        let mut raw = Vec::new();
        let mut index = HashMap::new();
        for rec in records {
            if !index.contains_key(&rec.item) {
                raw.push(rec.item.clone());
                index.insert(rec.item.clone(), (raw.len()) as u32);
            }
        }
        Catalog { raw, index }
    }

    /// Catalog whose raw names are the internal ids themselves, for data
    /// whose items are already contiguous integers from 1.
    pub fn identity(items: usize) -> Catalog {
        let raw: Vec<String> = (1..=items).map(|i| i.to_string()).collect();
        let index = raw.iter().enumerate().map(|(i, r)| (r.clone(), (i + 1) as u32)).collect();
        Catalog { raw, index }
    }

    /// Item count I.
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn internal(&self, raw: &str) -> Option<u32> {
        self.index.get(raw).copied()
    }

    /// Panics on 0 or out-of-range ids; those never name real items.
    pub fn raw(&self, internal: u32) -> &str {
        assert!(internal >= 1 && (internal as usize) <= self.raw.len(), "internal id {internal} out of range");
        &self.raw[(internal - 1) as usize]
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
        w.write_record(["internal", "raw"]).map_err(csv_err(path))?;
        for (i, raw) in self.raw.iter().enumerate() {
            w.write_record([&(i + 1).to_string(), raw]).map_err(csv_err(path))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Catalog> {
        let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
        let mut raw = Vec::new();
        let mut index = HashMap::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err(path))?;
            let internal: usize = field(&rec, 0, path, line)?.parse().map_err(|_| {
                Error::data(format!("{}: row {}: bad internal id", path.display(), line + 2))
            })?;
            if internal != raw.len() + 1 {
                return Err(Error::data(format!(
                    "{}: row {}: internal ids must be contiguous from 1",
                    path.display(),
                    line + 2
                )));
            }
            let item = field(&rec, 1, path, line)?.to_string();
            index.insert(item.clone(), internal as u32);
            raw.push(item);
        }
        Ok(Catalog { raw, index })
    }
}

/// Fixed-length window of the most recent positively-rewarded item ids,
/// ordered old to new and left-padded with [`PAD`].
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSequence(Vec<u32>);

impl StateSequence {
    pub fn empty(window: usize) -> Self {
        assert!(window >= 1, "window length must be at least 1");
        StateSequence(vec![PAD; window])
    }

    pub fn from_ids(ids: Vec<u32>) -> Self {
        assert!(!ids.is_empty());
        StateSequence(ids)
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn window(&self) -> usize {
        self.0.len()
    }

    /// Shift left once and append `item` (the positive-reward branch of the
    /// transition rule).
    pub fn push_positive(&self, item: u32) -> Self {
        let mut next = Vec::with_capacity(self.0.len());
        next.extend_from_slice(&self.0[1..]);
        next.push(item);
        StateSequence(next)
    }

    pub fn is_all_pad(&self) -> bool {
        self.0.iter().all(|&id| id == PAD)
    }

    /// Real (non-PAD) entries, oldest first.
    pub fn real_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.0.iter().copied().filter(|&id| id != PAD)
    }
}

/// One offline sample. When `reward > 0` the next state is the state shifted
/// left with the action appended; otherwise the next state equals the state.
/// `terminal` marks the final transition of the actor's episode, whose TD
/// target drops the bootstrap term.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: StateSequence,
    pub action: u32,
    pub reward: f32,
    pub next_state: StateSequence,
    pub terminal: bool,
    pub event: Option<EventKind>,
}

// ── parsing ─────────────────────────────────────────────────────────────

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::data(format!("{}: {e}", path.display()))
}

fn field<'a>(rec: &'a csv::StringRecord, idx: usize, path: &Path, line: usize) -> Result<&'a str> {
    rec.get(idx).ok_or_else(|| {
        Error::data(format!("{}: row {}: missing column {}", path.display(), line + 2, idx + 1))
    })
}

/// Reads a raw log. Records preserve file order; malformed rows fail with
/// their line number.
pub fn parse_log(path: &Path, schema: LogSchema) -> Result<Vec<InteractionRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))?;

    let headers = reader.headers().map_err(csv_err(path))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::data(format!("{}: missing required column `{name}`", path.display()))
        })
    };
    let (actor_col, item_col, feedback_col, time_col) = match schema {
        LogSchema::Ratings => (col("userId")?, col("itemId")?, col("rating")?, col("timestamp")?),
        LogSchema::Sessions => (col("sessionId")?, col("itemId")?, col("event")?, col("timestamp")?),
    };

    let mut out = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let loc = |what: &str| {
            Error::data(format!("{}: row {}: {what}", path.display(), line + 2))
        };
        let feedback = match schema {
            LogSchema::Ratings => {
                let raw = field(&rec, feedback_col, path, line)?;
                let rating: f64 =
                    raw.parse().map_err(|_| loc(&format!("unparseable rating `{raw}`")))?;
                if !rating.is_finite() {
                    return Err(loc(&format!("non-finite rating `{raw}`")));
                }
                Feedback::Rating(rating)
            }
            LogSchema::Sessions => {
                let raw = field(&rec, feedback_col, path, line)?;
                Feedback::Event(raw.parse().map_err(|_| loc(&format!("unknown event `{raw}`")))?)
            }
        };
        let raw_ts = field(&rec, time_col, path, line)?;
        let timestamp: i64 =
            raw_ts.parse().map_err(|_| loc(&format!("unparseable timestamp `{raw_ts}`")))?;
        if timestamp < 0 {
            return Err(loc(&format!("negative timestamp `{raw_ts}`")));
        }
        out.push(InteractionRecord {
            actor: field(&rec, actor_col, path, line)?.to_string(),
            item: field(&rec, item_col, path, line)?.to_string(),
            feedback,
            timestamp,
        });
    }
    Ok(out)
}

/// Keeps at most one record per (actor, timestamp), the first in file order.
pub fn dedupe_simultaneous(records: Vec<InteractionRecord>) -> Vec<InteractionRecord> {
    let mut seen: HashMap<(String, i64), ()> = HashMap::with_capacity(records.len());
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let key = (rec.actor.clone(), rec.timestamp);
        if seen.insert(key, ()).is_none() {
            out.push(rec);
        }
    }
    out
}

// ── chronological split ─────────────────────────────────────────────────

/// Records stably sorted by timestamp, partitioned by cumulative fraction.
#[derive(Debug, Clone)]
pub struct ChronoSplit {
    sorted: Vec<InteractionRecord>,
    train_end: usize,
    val_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Train,
    Validation,
    Test,
}

impl ChronoSplit {
    pub fn train(&self) -> &[InteractionRecord] {
        &self.sorted[..self.train_end]
    }

    pub fn validation(&self) -> &[InteractionRecord] {
        &self.sorted[self.train_end..self.val_end]
    }

    pub fn test(&self) -> &[InteractionRecord] {
        &self.sorted[self.val_end..]
    }

    pub fn into_parts(mut self) -> (Vec<InteractionRecord>, Vec<InteractionRecord>, Vec<InteractionRecord>) {
        let test = self.sorted.split_off(self.val_end);
        let validation = self.sorted.split_off(self.train_end);
        (self.sorted, validation, test)
    }

    /// Segment of the record at `idx` in the sorted order.
    pub fn segment_of(&self, idx: usize) -> Segment {
        if idx < self.train_end {
            Segment::Train
        } else if idx < self.val_end {
            Segment::Validation
        } else {
            Segment::Test
        }
    }

    pub fn sorted(&self) -> &[InteractionRecord] {
        &self.sorted
    }
}

/// Stable sort by timestamp, then cut at the rounded cumulative fractions.
/// Ties at a boundary fall on the side their stable position dictates.
pub fn chronological_split(records: Vec<InteractionRecord>, spec: &SplitSpec) -> Result<ChronoSplit> {
    spec.validate()?;
    if records.is_empty() {
        return Err(Error::data("cannot split an empty record set"));
    }
    let mut sorted = records;
    sorted.sort_by_key(|r| r.timestamp);
    let n = sorted.len() as f64;
    let train_end = (n * spec.train).round() as usize;
    let val_end = (n * (spec.train + spec.validation)).round() as usize;
    let train_end = train_end.min(sorted.len());
    let val_end = val_end.clamp(train_end, sorted.len());
    Ok(ChronoSplit { sorted, train_end, val_end })
}

// ── transition building ─────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PipelineConfig {
    /// Window length, the number of recent positive items a state holds.
    pub window: usize,
    pub reward: RewardSpec,
    pub split: SplitSpec,
    /// Emit a transition from the all-PAD state for an actor's first
    /// records, so episode-initial behavior is learnable. Default on.
    pub emit_cold_start: bool,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::config(format!("window must be at least 1, got {}", self.window)));
        }
        self.reward.validate()?;
        self.split.validate()
    }
}

/// Walks one actor's time-ordered records and emits its transitions along
/// with the index each record had in `stream`.
fn walk_actor(
    stream: &[(usize, &InteractionRecord)],
    catalog: &Catalog,
    window: usize,
    reward: &RewardSpec,
    emit_cold_start: bool,
) -> Result<Vec<(usize, Transition)>> {
    let mut state = StateSequence::empty(window);
    let mut out: Vec<(usize, Transition)> = Vec::with_capacity(stream.len());
    for &(idx, rec) in stream {
        let action = catalog.internal(&rec.item).ok_or_else(|| {
            Error::data(format!("item `{}` missing from catalog", rec.item))
        })?;
        let r = reward.map_reward(&rec.feedback)?;
        let next_state = if r > 0.0 { state.push_positive(action) } else { state.clone() };
        if emit_cold_start || !state.is_all_pad() {
            let event = match rec.feedback {
                Feedback::Event(e) => Some(e),
                Feedback::Rating(_) => None,
            };
            out.push((
                idx,
                Transition {
                    state: state.clone(),
                    action,
                    reward: r,
                    next_state: next_state.clone(),
                    terminal: false,
                    event,
                },
            ));
        }
        state = next_state;
    }
    if let Some(last) = out.last_mut() {
        last.1.terminal = true;
    }
    Ok(out)
}

/// Groups `records` per actor (each actor's records must be time-ordered,
/// which holds after [`chronological_split`]) and walks the transition rule
/// over every stream. Output is ordered by actor id, then time, regardless
/// of any internal parallelism.
pub fn build_transitions(
    records: &[InteractionRecord],
    catalog: &Catalog,
    window: usize,
    reward: &RewardSpec,
    emit_cold_start: bool,
) -> Result<Vec<Transition>> {
    let mut per_actor: HashMap<&str, Vec<(usize, &InteractionRecord)>> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        per_actor.entry(rec.actor.as_str()).or_default().push((i, rec));
    }
    let mut actors: Vec<&str> = per_actor.keys().copied().collect();
    actors.sort_unstable();

    let mut out = Vec::with_capacity(records.len());
    for actor in actors {
        let stream = &per_actor[actor];
        debug_assert!(stream.windows(2).all(|w| w[0].1.timestamp <= w[1].1.timestamp));
        for (_, t) in walk_actor(stream, catalog, window, reward, emit_cold_start)? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Internal item ids the actor has not interacted with strictly before `t`.
/// `history` must be time-ordered.
pub fn unrated_set(history: &[(i64, u32)], t: i64, catalog_len: usize) -> Vec<u32> {
    let mut seen = vec![false; catalog_len + 1];
    for &(ts, item) in history {
        if ts >= t {
            break;
        }
        seen[item as usize] = true;
    }
    (1..=catalog_len as u32).filter(|&id| !seen[id as usize]).collect()
}

// ── the full pipeline ───────────────────────────────────────────────────

/// The processed offline dataset: catalog plus per-segment transitions.
///
/// Transitions are built over each actor's full stream so state windows
/// carry across split boundaries, then each transition lands in the segment
/// of the record that produced it.
#[derive(Debug, Clone)]
pub struct ProcessedDataset {
    pub catalog: Catalog,
    pub train: Vec<Transition>,
    pub validation: Vec<Transition>,
    pub test: Vec<Transition>,
}

pub fn build_dataset(records: Vec<InteractionRecord>, cfg: &PipelineConfig) -> Result<ProcessedDataset> {
    cfg.validate()?;
    let records = dedupe_simultaneous(records);
    let split = chronological_split(records, &cfg.split)?;
    let catalog = Catalog::build(split.sorted());

    let mut per_actor: HashMap<&str, Vec<(usize, &InteractionRecord)>> = HashMap::new();
    for (i, rec) in split.sorted().iter().enumerate() {
        per_actor.entry(rec.actor.as_str()).or_default().push((i, rec));
    }
    let mut actors: Vec<&str> = per_actor.keys().copied().collect();
    actors.sort_unstable();

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for actor in actors {
        let stream = &per_actor[actor];
        for (idx, t) in walk_actor(stream, &catalog, cfg.window, &cfg.reward, cfg.emit_cold_start)? {
            match split.segment_of(idx) {
                Segment::Train => train.push(t),
                Segment::Validation => validation.push(t),
                Segment::Test => test.push(t),
            }
        }
    }
    Ok(ProcessedDataset { catalog, train, validation, test })
}

// ── processed-file round trip ───────────────────────────────────────────

/// Line format: `state(comma-separated ids) | action | reward | terminal |
/// event`, with `-` for an absent event tag.
pub fn write_transitions(path: &Path, transitions: &[Transition]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    for t in transitions {
        let ids: Vec<String> = t.state.ids().iter().map(|id| id.to_string()).collect();
        let event = t.event.map_or_else(|| "-".to_string(), |e| e.to_string());
        writeln!(w, "{} | {} | {} | {} | {}", ids.join(","), t.action, t.reward, t.terminal, event)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a processed dataset file, reconstructing next states from the
/// transition rule.
pub fn read_transitions(path: &Path) -> Result<Vec<Transition>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let loc = |what: &str| Error::data(format!("{}: line {}: {what}", path.display(), i + 1));
        let parts: Vec<&str> = line.split('|').map(str::trim).collect();
        if parts.len() != 5 {
            return Err(loc(&format!("expected 5 fields, got {}", parts.len())));
        }
        let state: Vec<u32> = parts[0]
            .split(',')
            .map(|s| s.trim().parse::<u32>().map_err(|_| loc(&format!("bad state id `{s}`"))))
            .collect::<Result<_>>()?;
        if state.is_empty() {
            return Err(loc("empty state window"));
        }
        let action: u32 = parts[1].parse().map_err(|_| loc(&format!("bad action `{}`", parts[1])))?;
        if action == PAD {
            return Err(loc("action id 0 is reserved for padding"));
        }
        let reward: f32 = parts[2].parse().map_err(|_| loc(&format!("bad reward `{}`", parts[2])))?;
        if !reward.is_finite() {
            return Err(loc("non-finite reward"));
        }
        let terminal: bool =
            parts[3].parse().map_err(|_| loc(&format!("bad terminal flag `{}`", parts[3])))?;
        let event = match parts[4] {
            "-" => None,
            other => Some(other.parse::<EventKind>().map_err(|_| loc(&format!("bad event `{other}`")))?),
        };
        let state = StateSequence::from_ids(state);
        let next_state = if reward > 0.0 { state.push_positive(action) } else { state.clone() };
        out.push(Transition { state, action, reward, next_state, terminal, event });
    }
    Ok(out)
}
