//! Buffer-construction strategies.
//!
//! The guarantee-minimum pass rebuilds the buffer from an empty state over
//! the previous buffer's entries followed by the new task's data. While the
//! buffer has room every sample is admitted. Once full, the incoming
//! sample's under-represented labels (those held by fewer than `m` entries)
//! decide which entries may be evicted, and the eviction target is the
//! candidate with the fewest unique labels, then the highest loss, then the
//! oldest insertion.

mod baseline;
mod gm;

pub use baseline::{baseline_step, HIGH_UNIQUE_NAME, MANY_LABELS_NAME, RANDOM_NAME};
pub use gm::{buffer_manager_step, build_under_represented_set, gm_process, select_candidates};

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{Buffer, BufferError, ImageId, LabelId, Sample};
use crate::loss::{LossError, LossOracle};
use crate::seed::derived_rng;

#[derive(Debug, Error, PartialEq)]
pub enum StrategyError {
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error("loss oracle failed: {0}")]
    Loss(#[from] LossError),
    #[error("image {0} appears more than once in the construction stream")]
    DuplicateImage(ImageId),
    #[error("image {0} has no loss assigned")]
    UnsetLoss(ImageId),
    #[error("buffer manager requires a full buffer")]
    BufferNotFull,
    #[error("invalid strategy config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Ebts,
    Random,
    HighUnique,
    ManyLabels,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] =
        [StrategyKind::Ebts, StrategyKind::Random, StrategyKind::HighUnique, StrategyKind::ManyLabels];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Ebts => "ebts",
            StrategyKind::Random => RANDOM_NAME,
            StrategyKind::HighUnique => HIGH_UNIQUE_NAME,
            StrategyKind::ManyLabels => MANY_LABELS_NAME,
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|k| k.name() == s).ok_or_else(|| {
            StrategyError::InvalidConfig(format!("unknown strategy {s:?}; valid: {}", Self::valid_names()))
        })
    }
}

/// Order in which the construction stream is processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StreamOrder {
    /// Previous-buffer entries first, then new data in dataset order.
    #[default]
    PreviousFirst,
    /// Seeded shuffle of the whole stream.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub capacity: usize,
    pub min_guarantee: usize,
    pub kind: StrategyKind,
    pub order: StreamOrder,
    pub seed: u64,
}

pub const DEFAULT_CAPACITY: usize = 1200;
pub const DEFAULT_MIN_GUARANTEE: usize = 12;

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            min_guarantee: DEFAULT_MIN_GUARANTEE,
            kind: StrategyKind::Ebts,
            order: StreamOrder::PreviousFirst,
            seed: 0,
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if self.capacity == 0 {
            return Err(StrategyError::InvalidConfig("capacity must be >= 1".into()));
        }
        if self.min_guarantee == 0 {
            return Err(StrategyError::InvalidConfig("min_guarantee must be >= 1".into()));
        }
        Ok(())
    }
}

/// Labels of the incoming sample held by fewer than `m` buffer entries.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnderRepresentedSet(pub BTreeSet<LabelId>);

impl UnderRepresentedSet {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, label: LabelId) -> bool {
        self.0.contains(&label)
    }

    pub fn labels(&self) -> impl Iterator<Item = LabelId> + '_ {
        self.0.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    InsertFree,
    Replace,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reason {
    BufferNotFull,
    ForcedByU,
    LossImprovement,
    NoImprovement,
    NoCandidates,
    /// Reservoir sampling picked a slot for the item.
    ReservoirHit,
    /// Reservoir sampling skipped the item.
    ReservoirMiss,
    /// Unconditional eviction by a rank-based baseline.
    BaselineEviction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacementDecision {
    pub action: Action,
    pub evicted: Option<ImageId>,
    pub reason: Reason,
}

impl ReplacementDecision {
    pub fn insert_free() -> Self {
        Self { action: Action::InsertFree, evicted: None, reason: Reason::BufferNotFull }
    }

    pub fn replace(evicted: ImageId, reason: Reason) -> Self {
        Self { action: Action::Replace, evicted: Some(evicted), reason }
    }

    pub fn reject(reason: Reason) -> Self {
        Self { action: Action::Reject, evicted: None, reason }
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub image_id: ImageId,
    pub action: Action,
    pub reason: Reason,
    pub evicted: Option<ImageId>,
    pub u_set: Vec<LabelId>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct StrategyOutcome {
    pub buffer: Buffer,
    pub log: Vec<DecisionRecord>,
}

/// Concatenates the previous buffer and the new data into the construction
/// stream. Losses are cleared; duplicate image ids are an error.
pub fn assemble_stream(
    previous: &[Sample],
    new_data: &[Sample],
    order: StreamOrder,
    seed: u64,
) -> Result<Vec<Sample>, StrategyError> {
    let mut seen = HashSet::with_capacity(previous.len() + new_data.len());
    let mut stream = Vec::with_capacity(previous.len() + new_data.len());
    for s in previous.iter().chain(new_data) {
        if !seen.insert(s.image_id()) {
            return Err(StrategyError::DuplicateImage(s.image_id()));
        }
        let mut s = s.clone();
        s.clear_loss();
        stream.push(s);
    }
    if order == StreamOrder::Shuffled {
        stream.shuffle(&mut derived_rng(seed, "strategy/order"));
    }
    Ok(stream)
}

/// Runs the configured strategy over `previous ++ new_data`.
///
/// `seen_before` is the number of stream items that produced `previous`;
/// reservoir sampling continues its count from there.
pub fn run_strategy<O: LossOracle + Sync>(
    previous: &[Sample],
    new_data: &[Sample],
    oracle: &O,
    cfg: &StrategyConfig,
    seen_before: usize,
) -> Result<StrategyOutcome, StrategyError> {
    match cfg.kind {
        StrategyKind::Ebts => gm_process(previous, new_data, oracle, cfg),
        kind => baseline::baseline_process(previous, new_data, oracle, cfg, kind, seen_before),
    }
}

/// Evaluates the oracle for every stream item. Losses depend only on the
/// sample, so this runs in parallel ahead of the sequential pass.
pub(crate) fn score_stream<O: LossOracle + Sync>(stream: &mut [Sample], oracle: &O) -> Result<(), StrategyError> {
    use rayon::prelude::*;
    let losses: Vec<Result<f64, LossError>> = stream.par_iter().map(|s| oracle.loss(s)).collect();
    for (s, l) in stream.iter_mut().zip(losses) {
        let l = l?;
        s.set_loss(l).map_err(|e| StrategyError::Loss(LossError::InvalidPrediction(e.to_string())))?;
    }
    Ok(())
}
