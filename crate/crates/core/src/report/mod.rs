//! Buffer statistics and distribution fidelity: how closely the buffer's
//! per-class containment counts track each class's expected share
//! `K · n_c / N` of a reference dataset.

mod compare;

pub use compare::{compare_strategies, CellResult, ComparisonRow, ComparisonTable, MeanStd, COMPARE_SCHEMA_VERSION};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::buffer::{Buffer, LabelId};
use crate::ingest::DatasetManifest;

/// Integer threshold a class's buffer count must reach against its
/// (real-valued) expected share.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    #[default]
    Floor,
    Ceil,
    Round,
}

impl Threshold {
    fn apply(self, x: f64) -> f64 {
        match self {
            Threshold::Floor => x.floor(),
            Threshold::Ceil => x.ceil(),
            Threshold::Round => x.round(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassFidelity {
    pub expected: f64,
    pub actual: usize,
    pub satisfied: bool,
    /// Expected share below one sample; always satisfied.
    pub below_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionReport {
    pub capacity: usize,
    /// `min(capacity, reference_samples)`, the `K` used for expected shares.
    pub effective_capacity: usize,
    pub threshold: Threshold,
    pub reference_samples: usize,
    pub per_class: BTreeMap<LabelId, ClassFidelity>,
    pub satisfied_count: usize,
    pub below_resolution_count: usize,
    pub total_classes: usize,
}

pub fn distribution_fidelity(buffer: &Buffer, reference: &DatasetManifest, capacity: usize) -> DistributionReport {
    distribution_fidelity_with(buffer, reference, capacity, Threshold::Floor)
}

/// Classes absent from the reference are not reported. A capacity larger
/// than the reference is clamped to the reference size.
pub fn distribution_fidelity_with(
    buffer: &Buffer,
    reference: &DatasetManifest,
    capacity: usize,
    threshold: Threshold,
) -> DistributionReport {
    let n = reference.samples.len();
    let k = capacity.min(n);
    let mut per_class = BTreeMap::new();
    for (label, n_c) in reference.class_frequencies() {
        if n_c == 0 {
            continue;
        }
        let expected = k as f64 * n_c as f64 / n as f64;
        let actual = buffer.label_count(label);
        let below_resolution = expected < 1.0;
        let satisfied = below_resolution || actual as f64 >= threshold.apply(expected);
        per_class.insert(label, ClassFidelity { expected, actual, satisfied, below_resolution });
    }
    DistributionReport {
        capacity,
        effective_capacity: k,
        threshold,
        reference_samples: n,
        satisfied_count: per_class.values().filter(|c| c.satisfied).count(),
        below_resolution_count: per_class.values().filter(|c| c.below_resolution).count(),
        total_classes: per_class.len(),
        per_class,
    }
}

/// Classes present in the reference whose buffer count falls short of
/// `min(m, available)`.
pub fn min_guarantee_violations(buffer: &Buffer, reference: &DatasetManifest, m: usize) -> usize {
    reference
        .class_frequencies()
        .into_iter()
        .filter(|&(label, available)| available > 0 && buffer.label_count(label) < m.min(available))
        .count()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub min: f64,
    pub median: f64,
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferStats {
    pub entries: usize,
    pub capacity: usize,
    pub utilization: f64,
    pub class_counts: BTreeMap<LabelId, usize>,
    /// `|unique_labels|` → number of entries.
    pub unique_label_histogram: BTreeMap<usize, usize>,
    pub loss: LossSummary,
}

/// Median of an even count is the midpoint of the two central values.
pub fn buffer_stats(buffer: &Buffer) -> BufferStats {
    let mut hist = BTreeMap::new();
    for e in buffer.entries() {
        *hist.entry(e.unique_labels().len()).or_insert(0) += 1;
    }
    let mut losses: Vec<f64> = buffer.entries().iter().filter_map(|e| e.loss()).collect();
    losses.sort_by(f64::total_cmp);
    let loss = if losses.is_empty() {
        LossSummary::default()
    } else {
        let n = losses.len();
        let median = if n % 2 == 1 { losses[n / 2] } else { (losses[n / 2 - 1] + losses[n / 2]) / 2.0 };
        LossSummary { min: losses[0], median, max: losses[n - 1], mean: losses.iter().sum::<f64>() / n as f64 }
    };
    BufferStats {
        entries: buffer.len(),
        capacity: buffer.capacity(),
        utilization: buffer.len() as f64 / buffer.capacity() as f64,
        class_counts: buffer.class_counts().clone(),
        unique_label_histogram: hist,
        loss,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::buffer::tests::sample;
    use crate::buffer::Sample;
    use crate::ingest::DatasetSource;

    fn reference(samples: Vec<Sample>, classes: u32) -> DatasetManifest {
        DatasetManifest {
            samples,
            categories: (0..classes).map(|c| (LabelId(c), format!("c{c}"))).collect(),
            source: DatasetSource::Synthetic,
        }
    }

    fn buffer_of(cap: usize, items: &[&[u32]]) -> Buffer {
        let mut b = Buffer::new(cap).unwrap();
        for (i, l) in items.iter().enumerate() {
            b.insert(sample(i as u64, l, 1.0)).unwrap();
        }
        b
    }

    #[test]
    fn uniform_buffer_satisfies_uniform_reference() {
        let r = reference((0..20).map(|i| sample(i, &[(i % 5) as u32], 0.0)).collect(), 5);
        let b = buffer_of(5, &[&[0], &[1], &[2], &[3], &[4]]);
        let rep = distribution_fidelity(&b, &r, 5);
        assert_eq!(rep.satisfied_count, 5);
        assert_eq!(rep.total_classes, 5);
    }

    #[test]
    fn skewed_reference() {
        // a in 90 samples, b in 10, K = 10
        let r = reference((0..100).map(|i| sample(i, &[if i < 90 { 0 } else { 1 }], 0.0)).collect(), 2);
        let good: Vec<&[u32]> = (0..10).map(|i| if i < 9 { &[0][..] } else { &[1][..] }).collect();
        let rep = distribution_fidelity(&buffer_of(10, &good), &r, 10);
        assert!((rep.per_class[&LabelId(0)].expected - 9.0).abs() < 1e-12);
        assert!((rep.per_class[&LabelId(1)].expected - 1.0).abs() < 1e-12);
        assert_eq!(rep.satisfied_count, 2);

        let only_a: Vec<&[u32]> = vec![&[0]; 10];
        let rep = distribution_fidelity(&buffer_of(10, &only_a), &r, 10);
        assert!(rep.per_class[&LabelId(0)].satisfied);
        assert!(!rep.per_class[&LabelId(1)].satisfied);
        assert_eq!(rep.satisfied_count, 1);
    }

    #[test]
    fn below_resolution_classes_are_flagged() {
        let r = reference((0..100).map(|i| sample(i, &[if i < 99 { 0 } else { 1 }], 0.0)).collect(), 3);
        let rep = distribution_fidelity(&buffer_of(10, &[&[0]]), &r, 10);
        let rare = rep.per_class[&LabelId(1)];
        assert!(rare.below_resolution && rare.satisfied);
        assert_eq!(rep.below_resolution_count, 1);
        // class 2 never occurs in the reference
        assert_eq!(rep.total_classes, 2);
        assert!(rep.satisfied_count <= rep.total_classes);
    }

    #[test]
    fn threshold_operators_differ() {
        // expected share 2.5 with a count of 2
        let r = reference((0..20).map(|i| sample(i, &[if i < 5 { 0 } else { 1 }], 0.0)).collect(), 2);
        let b = buffer_of(10, &[&[0], &[0]]);
        assert!(distribution_fidelity_with(&b, &r, 10, Threshold::Floor).per_class[&LabelId(0)].satisfied);
        assert!(!distribution_fidelity_with(&b, &r, 10, Threshold::Ceil).per_class[&LabelId(0)].satisfied);
        assert!(!distribution_fidelity_with(&b, &r, 10, Threshold::Round).per_class[&LabelId(0)].satisfied);
    }

    #[test]
    fn full_reference_in_buffer_satisfies_everything() {
        let samples: Vec<Sample> = (0..30).map(|i| sample(i, &[(i % 7) as u32, (i % 3) as u32], 1.0)).collect();
        let r = reference(samples.clone(), 7);
        let mut b = Buffer::new(30).unwrap();
        for s in samples {
            b.insert(s).unwrap();
        }
        let rep = distribution_fidelity(&b, &r, 30);
        assert_eq!(rep.satisfied_count, rep.total_classes);
        assert_eq!(min_guarantee_violations(&b, &r, 5), 0);
    }

    #[test]
    fn oversized_capacity_is_clamped() {
        let samples: Vec<Sample> = (0..6).map(|i| sample(i, &[(i % 2) as u32], 1.0)).collect();
        let r = reference(samples.clone(), 2);
        let mut b = Buffer::new(100).unwrap();
        for s in samples {
            b.insert(s).unwrap();
        }
        let rep = distribution_fidelity(&b, &r, 100);
        assert_eq!(rep.effective_capacity, 6);
        assert_eq!(rep.per_class[&LabelId(0)].expected, 3.0);
        assert_eq!(rep.satisfied_count, 2);
    }

    #[test]
    fn guarantee_violations() {
        let r = reference(vec![sample(0, &[0], 0.0), sample(1, &[0], 0.0), sample(2, &[1], 0.0)], 2);
        // class 0 available twice, m = 3 → needs 2; class 1 needs 1
        assert_eq!(min_guarantee_violations(&buffer_of(4, &[&[0]]), &r, 3), 2);
        assert_eq!(min_guarantee_violations(&buffer_of(4, &[&[0], &[0], &[1]]), &r, 3), 0);
    }

    #[test]
    fn stats() {
        let empty = buffer_stats(&Buffer::new(4).unwrap());
        assert_eq!(empty.entries, 0);
        assert_eq!(empty.utilization, 0.0);
        assert_eq!(empty.loss, LossSummary::default());
        assert!(empty.unique_label_histogram.is_empty());

        let mut b = Buffer::new(4).unwrap();
        b.insert(sample(1, &[0], 1.0)).unwrap();
        b.insert(sample(2, &[0, 1], 3.0)).unwrap();
        let s = buffer_stats(&b);
        assert_eq!(s.loss.median, 2.0);
        assert_eq!((s.loss.min, s.loss.max), (1.0, 3.0));
        assert_eq!(s.unique_label_histogram.values().sum::<usize>(), 2);
        assert_eq!(s.utilization, 0.5);
    }
}
