//! Epoch plans for replay training.
//!
//! An ER epoch is one shuffled pass over the new data and the buffer
//! together. A CER epoch walks the shuffled new data once and pairs each new
//! item with buffer items taken from a circular iterator: the buffer order is
//! a seeded permutation that is reshuffled every time it wraps, so within an
//! epoch no buffer item is drawn twice before every other one was drawn once.
//! A task schedule runs its ER epochs first and its CER epochs last.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::ImageId;
use crate::seed::{derive_seed, rng_from, Rng};

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("no new data to schedule")]
    EmptyDataset,
    #[error("circular replay needs a non-empty buffer")]
    EmptyBuffer,
    #[error("invalid schedule config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpochKind {
    #[serde(rename = "ER")]
    Er,
    #[serde(rename = "CER")]
    Cer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Source {
    #[serde(rename = "NEW")]
    New,
    #[serde(rename = "BUFFER")]
    Buffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub source: Source,
    pub image_id: ImageId,
}

pub type Batch = Vec<PlanItem>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub epoch: usize,
    pub kind: EpochKind,
    pub batches: Vec<Batch>,
}

impl EpochPlan {
    pub fn items(&self) -> impl Iterator<Item = &PlanItem> {
        self.batches.iter().flatten()
    }
}

/// One line of a plan export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub epoch: usize,
    pub kind: EpochKind,
    pub items: Vec<PlanItem>,
}

impl EpochPlan {
    pub fn records(&self) -> impl Iterator<Item = BatchRecord> + '_ {
        self.batches.iter().map(|b| BatchRecord { epoch: self.epoch, kind: self.kind, items: b.clone() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub total_epochs: usize,
    pub er_epochs: usize,
    pub cer_epochs: usize,
    pub batch_size: usize,
    /// Buffer items paired with each new item in a CER epoch.
    pub cer_buffer_per_new: usize,
    pub seed: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self { total_epochs: 50, er_epochs: 48, cer_epochs: 2, batch_size: 3, cer_buffer_per_new: 1, seed: 0 }
    }
}

/// ER:CER splits of a 50-epoch budget, ordered by increasing ER share.
pub const ER_CER_SWEEP: [(usize, usize); 5] = [(40, 10), (42, 8), (44, 6), (46, 4), (48, 2)];

impl ScheduleConfig {
    pub fn with_ratio(self, er: usize, cer: usize) -> Self {
        Self { total_epochs: er + cer, er_epochs: er, cer_epochs: cer, ..self }
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.total_epochs == 0 {
            return Err(ScheduleError::InvalidConfig("total_epochs must be >= 1".into()));
        }
        if self.er_epochs + self.cer_epochs != self.total_epochs {
            return Err(ScheduleError::InvalidConfig(format!(
                "er_epochs ({}) + cer_epochs ({}) must equal total_epochs ({})",
                self.er_epochs, self.cer_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(ScheduleError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.cer_buffer_per_new == 0 {
            return Err(ScheduleError::InvalidConfig("cer_buffer_per_new must be >= 1".into()));
        }
        Ok(())
    }
}

fn epoch_rng(cfg: &ScheduleConfig, epoch_index: usize) -> Rng {
    rng_from(derive_seed(cfg.seed, &format!("schedule/epoch/{epoch_index}")))
}

fn chunk(items: Vec<PlanItem>, batch_size: usize) -> Vec<Batch> {
    items.chunks(batch_size).map(<[PlanItem]>::to_vec).collect()
}

pub fn make_er_epoch(
    new_ids: &[ImageId],
    buffer_ids: &[ImageId],
    cfg: &ScheduleConfig,
    epoch_index: usize,
) -> Result<EpochPlan, ScheduleError> {
    if new_ids.is_empty() {
        return Err(ScheduleError::EmptyDataset);
    }
    let mut items: Vec<PlanItem> = new_ids
        .iter()
        .map(|&image_id| PlanItem { source: Source::New, image_id })
        .chain(buffer_ids.iter().map(|&image_id| PlanItem { source: Source::Buffer, image_id }))
        .collect();
    items.shuffle(&mut epoch_rng(cfg, epoch_index));
    Ok(EpochPlan { epoch: epoch_index, kind: EpochKind::Er, batches: chunk(items, cfg.batch_size) })
}

/// Cycles through a slice, reshuffling at every wrap.
struct CircularIter<'a> {
    ids: &'a [ImageId],
    order: Vec<usize>,
    pos: usize,
}

impl<'a> CircularIter<'a> {
    fn new(ids: &'a [ImageId], rng: &mut Rng) -> Self {
        let mut order: Vec<usize> = (0..ids.len()).collect();
        order.shuffle(rng);
        Self { ids, order, pos: 0 }
    }

    fn next(&mut self, rng: &mut Rng) -> ImageId {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let id = self.ids[self.order[self.pos]];
        self.pos += 1;
        id
    }
}

pub fn make_cer_epoch(
    new_ids: &[ImageId],
    buffer_ids: &[ImageId],
    cfg: &ScheduleConfig,
    epoch_index: usize,
) -> Result<EpochPlan, ScheduleError> {
    if new_ids.is_empty() {
        return Err(ScheduleError::EmptyDataset);
    }
    if buffer_ids.is_empty() {
        return Err(ScheduleError::EmptyBuffer);
    }
    let mut rng = epoch_rng(cfg, epoch_index);
    let mut new_order = new_ids.to_vec();
    new_order.shuffle(&mut rng);
    let mut circle = CircularIter::new(buffer_ids, &mut rng);
    let mut items = Vec::with_capacity(new_order.len() * (1 + cfg.cer_buffer_per_new));
    for image_id in new_order {
        items.push(PlanItem { source: Source::New, image_id });
        for _ in 0..cfg.cer_buffer_per_new {
            items.push(PlanItem { source: Source::Buffer, image_id: circle.next(&mut rng) });
        }
    }
    Ok(EpochPlan { epoch: epoch_index, kind: EpochKind::Cer, batches: chunk(items, cfg.batch_size) })
}

/// ER epochs followed by CER epochs. Without a buffer every epoch is ER.
pub fn make_task_schedule(
    new_ids: &[ImageId],
    buffer_ids: &[ImageId],
    cfg: &ScheduleConfig,
) -> Result<Vec<EpochPlan>, ScheduleError> {
    cfg.validate()?;
    let cer_epochs = if buffer_ids.is_empty() { 0 } else { cfg.cer_epochs };
    let er_epochs = cfg.total_epochs - cer_epochs;
    let mut plans = Vec::with_capacity(cfg.total_epochs);
    for e in 0..er_epochs {
        plans.push(make_er_epoch(new_ids, buffer_ids, cfg, e)?);
    }
    for e in er_epochs..cfg.total_epochs {
        plans.push(make_cer_epoch(new_ids, buffer_ids, cfg, e)?);
    }
    Ok(plans)
}
