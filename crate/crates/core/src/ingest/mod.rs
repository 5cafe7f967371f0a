//! Dataset loading and slicing: COCO instances files, synthetic long-tailed
//! streams, and the split of the class universe into incremental tasks.

mod coco;
mod synthetic;
mod tasks;

pub use coco::{export_coco, parse_coco, parse_coco_reader, parse_coco_str, write_coco, CocoFile, LoadReport};
pub use synthetic::{synthetic_stream, SyntheticStreamConfig};
pub use tasks::{cumulative_view, merge_views, split_tasks, task_view, SplitSpec, TaskSplit};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{LabelId, Sample};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("annotation {annotation_id} has negative extent (w = {w}, h = {h})")]
    NegativeExtent { annotation_id: u64, w: f64, h: f64 },
    #[error("task boundaries {boundaries:?} sum to {sum}, but the dataset has {categories} categories")]
    BoundaryMismatch { boundaries: Vec<usize>, sum: usize, categories: usize },
    #[error("invalid split {0:?}; expected sizes joined by '+', e.g. 40+40")]
    InvalidSplit(String),
    #[error("task index {index} out of range for {tasks} tasks")]
    TaskOutOfRange { index: usize, tasks: usize },
    #[error("invalid synthetic stream config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DatasetSource {
    Coco,
    Synthetic,
}

/// Annotation metadata for one dataset or task view. Losses are unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub samples: Vec<Sample>,
    pub categories: BTreeMap<LabelId, String>,
    pub source: DatasetSource,
}

impl DatasetManifest {
    /// Length of a class-probability vector indexed by label id.
    pub fn class_universe(&self) -> usize {
        self.categories.keys().next_back().map_or(0, |l| l.index() + 1)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples containing each category (zero entries included).
    pub fn class_frequencies(&self) -> BTreeMap<LabelId, usize> {
        let mut freq: BTreeMap<LabelId, usize> = self.categories.keys().map(|&l| (l, 0)).collect();
        for s in &self.samples {
            for &l in s.unique_labels() {
                *freq.entry(l).or_insert(0) += 1;
            }
        }
        freq
    }
}
