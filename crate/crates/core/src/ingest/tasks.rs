use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, IngestError};
use crate::buffer::{LabelId, Sample};

/// Task sizes, e.g. `40+40` or `40+20+20`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec(pub Vec<usize>);

impl FromStr for SplitSpec {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let sizes: Result<Vec<usize>, _> = s.split('+').map(|p| p.trim().parse::<usize>()).collect();
        match sizes {
            Ok(v) if !v.is_empty() && v.iter().all(|&n| n > 0) => Ok(SplitSpec(v)),
            _ => Err(IngestError::InvalidSplit(s.to_string())),
        }
    }
}

impl fmt::Display for SplitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&parts.join("+"))
    }
}

impl Serialize for SplitSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SplitSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Ordered, pairwise-disjoint class sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub tasks: Vec<BTreeSet<LabelId>>,
}

impl TaskSplit {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    fn check(&self, index: usize) -> Result<(), IngestError> {
        if index >= self.tasks.len() {
            return Err(IngestError::TaskOutOfRange { index, tasks: self.tasks.len() });
        }
        Ok(())
    }
}

/// Categories in ascending id order, cut into consecutive runs of the given
/// sizes.
pub fn split_tasks(manifest: &DatasetManifest, boundaries: &[usize]) -> Result<TaskSplit, IngestError> {
    let sum: usize = boundaries.iter().sum();
    let n = manifest.categories.len();
    if sum != n || boundaries.is_empty() {
        return Err(IngestError::BoundaryMismatch { boundaries: boundaries.to_vec(), sum, categories: n });
    }
    let mut ids = manifest.categories.keys().copied();
    let tasks = boundaries.iter().map(|&size| ids.by_ref().take(size).collect()).collect();
    Ok(TaskSplit { tasks })
}

fn restrict(manifest: &DatasetManifest, classes: &BTreeSet<LabelId>) -> DatasetManifest {
    DatasetManifest {
        samples: manifest.samples.iter().filter_map(|s| s.restricted(|l| classes.contains(&l))).collect(),
        categories: manifest
            .categories
            .iter()
            .filter(|(l, _)| classes.contains(l))
            .map(|(l, n)| (*l, n.clone()))
            .collect(),
        source: manifest.source,
    }
}

/// Samples of task `index` (0-based): images with at least one annotation of
/// the task's classes, other classes' annotations stripped.
pub fn task_view(manifest: &DatasetManifest, split: &TaskSplit, index: usize) -> Result<DatasetManifest, IngestError> {
    split.check(index)?;
    Ok(restrict(manifest, &split.tasks[index]))
}

/// Like [`task_view`] over the classes of tasks `0..=index` together.
pub fn cumulative_view(
    manifest: &DatasetManifest,
    split: &TaskSplit,
    index: usize,
) -> Result<DatasetManifest, IngestError> {
    split.check(index)?;
    let classes: BTreeSet<LabelId> = split.tasks[..=index].iter().flatten().copied().collect();
    Ok(restrict(manifest, &classes))
}

/// Folds samples of `new_data` whose image is already in `previous` into the
/// previous entry (annotations merged). Returns the updated previous entries
/// and the remaining new samples plus how many images were merged.
pub fn merge_views(previous: &[Sample], new_data: &[Sample]) -> (Vec<Sample>, Vec<Sample>, usize) {
    let mut prev: Vec<Sample> = previous.to_vec();
    let index: HashMap<_, usize> = prev.iter().enumerate().map(|(i, s)| (s.image_id(), i)).collect();
    let mut rest = Vec::with_capacity(new_data.len());
    let mut merged = 0;
    for s in new_data {
        match index.get(&s.image_id()) {
            Some(&i) => {
                prev[i].merge_annotations(s);
                merged += 1;
            }
            None => rest.push(s.clone()),
        }
    }
    (prev, rest, merged)
}
