//! Comparison strategies: reservoir sampling, and random eviction among the
//! entries with the fewest unique labels or the fewest annotations.

use rand::Rng as _;

use super::{
    assemble_stream, score_stream, DecisionRecord, Reason, ReplacementDecision, StrategyConfig, StrategyError,
    StrategyKind, StrategyOutcome,
};
use crate::buffer::{Buffer, Sample};
use crate::loss::LossOracle;
use crate::seed::{derived_rng, Rng};

pub const RANDOM_NAME: &str = "random";
pub const HIGH_UNIQUE_NAME: &str = "high_unique";
pub const MANY_LABELS_NAME: &str = "many_labels";

fn evict_random_min_by<K: Fn(&Sample) -> usize>(buffer: &Buffer, rng: &mut Rng, key: K) -> usize {
    let min = buffer.entries().iter().map(&key).min().expect("buffer is full");
    let ties: Vec<usize> = buffer.entries().iter().enumerate().filter(|(_, e)| key(e) == min).map(|(i, _)| i).collect();
    ties[rng.random_range(0..ties.len())]
}

/// One baseline decision. `stream_index` is the 1-based position of
/// `sample` in the overall stream (used by reservoir sampling only).
pub fn baseline_step(
    buffer: &mut Buffer,
    sample: Sample,
    kind: StrategyKind,
    rng: &mut Rng,
    stream_index: usize,
) -> Result<ReplacementDecision, StrategyError> {
    if sample.loss().is_none() {
        return Err(StrategyError::UnsetLoss(sample.image_id()));
    }
    if !buffer.is_full() {
        buffer.insert(sample)?;
        return Ok(ReplacementDecision::insert_free());
    }
    let (pos, reason) = match kind {
        StrategyKind::Random => {
            let slot = rng.random_range(0..stream_index.max(1));
            if slot >= buffer.capacity() {
                return Ok(ReplacementDecision::reject(Reason::ReservoirMiss));
            }
            (slot, Reason::ReservoirHit)
        }
        StrategyKind::HighUnique => {
            (evict_random_min_by(buffer, rng, |e| e.unique_labels().len()), Reason::BaselineEviction)
        }
        StrategyKind::ManyLabels => {
            (evict_random_min_by(buffer, rng, |e| e.annotations().len()), Reason::BaselineEviction)
        }
        StrategyKind::Ebts => {
            return Err(StrategyError::InvalidConfig("ebts is not a baseline strategy".into()));
        }
    };
    let evicted = buffer.remove_at(pos).image_id();
    buffer.insert(sample)?;
    Ok(ReplacementDecision::replace(evicted, reason))
}

pub(crate) fn baseline_process<O: LossOracle + Sync>(
    previous: &[Sample],
    new_data: &[Sample],
    oracle: &O,
    cfg: &StrategyConfig,
    kind: StrategyKind,
    seen_before: usize,
) -> Result<StrategyOutcome, StrategyError> {
    cfg.validate()?;
    let mut stream = assemble_stream(previous, new_data, cfg.order, cfg.seed)?;
    score_stream(&mut stream, oracle)?;
    let mut rng = derived_rng(cfg.seed, &format!("strategy/{}", kind.name()));
    let offset = seen_before.saturating_sub(previous.len());

    let mut buffer = Buffer::new(cfg.capacity)?;
    let mut log = Vec::with_capacity(stream.len());
    for (k, d) in stream.into_iter().enumerate() {
        let loss = d.loss().expect("scored");
        let image_id = d.image_id();
        let decision = baseline_step(&mut buffer, d, kind, &mut rng, offset + k + 1)?;
        log.push(DecisionRecord {
            image_id,
            action: decision.action,
            reason: decision.reason,
            evicted: decision.evicted,
            u_set: Vec::new(),
            loss,
        });
    }
    Ok(StrategyOutcome { buffer, log })
}
