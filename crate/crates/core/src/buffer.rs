//! Domain types shared by every strategy: labels, boxes, samples and the
//! capacity-bounded replay buffer.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Class identifier (COCO category id or synthetic class index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Opaque image identifier, unique within a dataset or buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub u64);

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum BufferError {
    #[error("buffer is full (capacity {capacity})")]
    CapacityExceeded { capacity: usize },
    #[error("image {0} is already in the buffer")]
    DuplicateImage(ImageId),
    #[error("image {0} has no loss assigned")]
    UnsetLoss(ImageId),
    #[error("image {0} is not in the buffer")]
    NotFound(ImageId),
    #[error("buffer capacity must be positive")]
    ZeroCapacity,
}

#[derive(Debug, Error, PartialEq)]
pub enum SampleError {
    #[error("box has negative extent: ({x_min}, {y_min}, {x_max}, {y_max})")]
    NegativeExtent { x_min: f64, y_min: f64, x_max: f64, y_max: f64 },
    #[error("box has a non-finite coordinate")]
    NonFinite,
    #[error("image {0} has no annotations")]
    EmptyAnnotations(ImageId),
    #[error("loss must be finite and non-negative, got {0}")]
    InvalidLoss(f64),
}

/// Axis-aligned box in corner form. Zero-area boxes are allowed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, SampleError> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(SampleError::NonFinite);
        }
        if x_min > x_max || y_min > y_max {
            return Err(SampleError::NegativeExtent { x_min, y_min, x_max, y_max });
        }
        Ok(Self { x_min, y_min, x_max, y_max })
    }

    /// Builds a box from COCO `[x, y, width, height]` form.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self, SampleError> {
        if w < 0.0 || h < 0.0 {
            return Err(SampleError::NegativeExtent { x_min: x, y_min: y, x_max: x + w, y_max: y + h });
        }
        Self::new(x, y, x + w, y + h)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn y_min(&self) -> f64 {
        self.y_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn to_xywh(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.width(), self.height()]
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl<'de> Deserialize<'de> for BoundingBox {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [a, b, c, e] = <[f64; 4]>::deserialize(d)?;
        BoundingBox::new(a, b, c, e).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub label: LabelId,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
}

impl Annotation {
    pub fn new(label: LabelId, bbox: BoundingBox) -> Self {
        Self { label, bbox }
    }
}

/// One image's annotation record together with its cached unique-label set
/// and (once the loss oracle has run) its sample loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SampleRecord")]
pub struct Sample {
    image_id: ImageId,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_size: Option<(f64, f64)>,
    annotations: Vec<Annotation>,
    unique_labels: BTreeSet<LabelId>,
    loss: Option<f64>,
}

#[derive(Deserialize)]
struct SampleRecord {
    image_id: ImageId,
    #[serde(default)]
    image_size: Option<(f64, f64)>,
    annotations: Vec<Annotation>,
    #[serde(default)]
    loss: Option<f64>,
}

impl TryFrom<SampleRecord> for Sample {
    type Error = SampleError;

    fn try_from(r: SampleRecord) -> Result<Self, Self::Error> {
        let mut s = Sample::new(r.image_id, r.annotations)?;
        s.image_size = r.image_size;
        if let Some(l) = r.loss {
            s.set_loss(l)?;
        }
        Ok(s)
    }
}

impl Sample {
    /// Zero-annotation samples are rejected.
    pub fn new(image_id: ImageId, annotations: Vec<Annotation>) -> Result<Self, SampleError> {
        if annotations.is_empty() {
            return Err(SampleError::EmptyAnnotations(image_id));
        }
        let unique_labels = annotations.iter().map(|a| a.label).collect();
        Ok(Self { image_id, image_size: None, annotations, unique_labels, loss: None })
    }

    pub fn with_image_size(mut self, width: f64, height: f64) -> Self {
        self.image_size = Some((width, height));
        self
    }

    pub fn with_loss(mut self, loss: f64) -> Result<Self, SampleError> {
        self.set_loss(loss)?;
        Ok(self)
    }

    pub fn set_loss(&mut self, loss: f64) -> Result<(), SampleError> {
        if !loss.is_finite() || loss < 0.0 {
            return Err(SampleError::InvalidLoss(loss));
        }
        self.loss = Some(loss);
        Ok(())
    }

    pub fn clear_loss(&mut self) {
        self.loss = None;
    }

    pub fn image_id(&self) -> ImageId {
        self.image_id
    }

    pub fn image_size(&self) -> Option<(f64, f64)> {
        self.image_size
    }

    pub fn annotations(&self) -> &[Annotation] {
        &self.annotations
    }

    pub fn unique_labels(&self) -> &BTreeSet<LabelId> {
        &self.unique_labels
    }

    pub fn loss(&self) -> Option<f64> {
        self.loss
    }

    pub fn contains_label(&self, label: LabelId) -> bool {
        self.unique_labels.contains(&label)
    }

    /// Keeps only annotations whose label satisfies `keep`. Returns `None`
    /// when nothing survives. The cached loss is dropped.
    pub fn restricted<F: Fn(LabelId) -> bool>(&self, keep: F) -> Option<Sample> {
        let annotations: Vec<_> = self.annotations.iter().copied().filter(|a| keep(a.label)).collect();
        let mut s = Sample::new(self.image_id, annotations).ok()?;
        s.image_size = self.image_size;
        Some(s)
    }

    /// Appends annotations from another view of the same image.
    pub fn merge_annotations(&mut self, other: &Sample) {
        for a in &other.annotations {
            if !self.annotations.contains(a) {
                self.annotations.push(*a);
                self.unique_labels.insert(a.label);
            }
        }
        if self.image_size.is_none() {
            self.image_size = other.image_size;
        }
        self.loss = None;
    }
}

/// Fixed-capacity replay buffer. Entries keep insertion order and the
/// per-class containment counts are maintained on every mutation.
#[derive(Debug, Clone, PartialEq)]
pub struct Buffer {
    capacity: usize,
    entries: Vec<Sample>,
    class_counts: BTreeMap<LabelId, usize>,
    ids: HashSet<ImageId>,
}

impl Buffer {
    pub fn new(capacity: usize) -> Result<Self, BufferError> {
        if capacity == 0 {
            return Err(BufferError::ZeroCapacity);
        }
        Ok(Self { capacity, entries: Vec::new(), class_counts: BTreeMap::new(), ids: HashSet::new() })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() >= self.capacity
    }

    pub fn entries(&self) -> &[Sample] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<Sample> {
        self.entries
    }

    pub fn class_counts(&self) -> &BTreeMap<LabelId, usize> {
        &self.class_counts
    }

    pub fn contains(&self, image_id: ImageId) -> bool {
        self.ids.contains(&image_id)
    }

    /// Number of entries whose unique-label set contains `label`.
    pub fn label_count(&self, label: LabelId) -> usize {
        self.class_counts.get(&label).copied().unwrap_or(0)
    }

    pub fn position(&self, image_id: ImageId) -> Option<usize> {
        if !self.contains(image_id) {
            return None;
        }
        self.entries.iter().position(|e| e.image_id() == image_id)
    }

    pub fn insert(&mut self, sample: Sample) -> Result<(), BufferError> {
        if self.is_full() {
            return Err(BufferError::CapacityExceeded { capacity: self.capacity });
        }
        if self.ids.contains(&sample.image_id()) {
            return Err(BufferError::DuplicateImage(sample.image_id()));
        }
        if sample.loss().is_none() {
            return Err(BufferError::UnsetLoss(sample.image_id()));
        }
        for &label in sample.unique_labels() {
            *self.class_counts.entry(label).or_insert(0) += 1;
        }
        self.ids.insert(sample.image_id());
        self.entries.push(sample);
        Ok(())
    }

    pub fn remove(&mut self, image_id: ImageId) -> Result<Sample, BufferError> {
        let pos = self.position(image_id).ok_or(BufferError::NotFound(image_id))?;
        Ok(self.remove_at(pos))
    }

    /// Removes the entry at `pos`; surviving entries keep their order.
    pub fn remove_at(&mut self, pos: usize) -> Sample {
        let sample = self.entries.remove(pos);
        for label in sample.unique_labels() {
            if let Some(c) = self.class_counts.get_mut(label) {
                *c -= 1;
                if *c == 0 {
                    self.class_counts.remove(label);
                }
            }
        }
        self.ids.remove(&sample.image_id());
        sample
    }

    /// Recomputes the containment counts from the entries.
    pub fn recount(&self) -> BTreeMap<LabelId, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            for &l in e.unique_labels() {
                *counts.entry(l).or_insert(0) += 1;
            }
        }
        counts
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn sample(id: u64, labels: &[u32], loss: f64) -> Sample {
        let anns = labels
            .iter()
            .map(|&l| Annotation::new(LabelId(l), BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap()))
            .collect();
        Sample::new(ImageId(id), anns).unwrap().with_loss(loss).unwrap()
    }

    fn counts(pairs: &[(u32, usize)]) -> BTreeMap<LabelId, usize> {
        pairs.iter().map(|&(l, c)| (LabelId(l), c)).collect()
    }

    #[test]
    fn insert_into_empty_buffer() {
        let mut b = Buffer::new(3).unwrap();
        b.insert(sample(1, &[1, 2], 0.1)).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b.class_counts(), &counts(&[(1, 1), (2, 1)]));
    }

    #[test]
    fn insert_updates_existing_counts() {
        let mut b = Buffer::new(3).unwrap();
        b.insert(sample(1, &[1], 0.1)).unwrap();
        b.insert(sample(2, &[1, 3], 0.1)).unwrap();
        assert_eq!(b.class_counts(), &counts(&[(1, 2), (3, 1)]));
    }

    #[test]
    fn insert_errors() {
        let mut b = Buffer::new(1).unwrap();
        b.insert(sample(1, &[1], 0.1)).unwrap();
        assert_eq!(b.insert(sample(2, &[1], 0.1)), Err(BufferError::CapacityExceeded { capacity: 1 }));

        let mut b = Buffer::new(2).unwrap();
        b.insert(sample(1, &[1], 0.1)).unwrap();
        assert_eq!(b.insert(sample(1, &[2], 0.1)), Err(BufferError::DuplicateImage(ImageId(1))));

        let mut unset = sample(3, &[1], 0.1);
        unset.clear_loss();
        assert_eq!(b.insert(unset), Err(BufferError::UnsetLoss(ImageId(3))));
        assert_eq!(Buffer::new(0).unwrap_err(), BufferError::ZeroCapacity);
    }

    #[test]
    fn remove_decrements_counts() {
        let mut b = Buffer::new(3).unwrap();
        b.insert(sample(10, &[1], 0.1)).unwrap();
        b.insert(sample(11, &[1, 2], 0.1)).unwrap();
        let before = b.clone();
        let removed = b.remove(ImageId(10)).unwrap();
        assert_eq!(b.class_counts(), &counts(&[(1, 1), (2, 1)]));
        assert_eq!(b.remove(ImageId(99)), Err(BufferError::NotFound(ImageId(99))));

        b.insert(removed).unwrap();
        assert_eq!(b.class_counts(), before.class_counts());
    }

    #[test]
    fn label_count_queries() {
        let mut b = Buffer::new(4).unwrap();
        assert_eq!(b.label_count(LabelId(7)), 0);
        b.insert(sample(1, &[1, 2], 0.1)).unwrap();
        b.insert(sample(2, &[2, 3], 0.1)).unwrap();
        assert_eq!(b.label_count(LabelId(2)), 2);
        for (l, c) in b.class_counts() {
            assert_eq!(b.label_count(*l), *c);
        }
    }

    #[test]
    fn duplicate_annotations_count_once() {
        let mut b = Buffer::new(2).unwrap();
        b.insert(sample(1, &[4, 4, 4], 0.1)).unwrap();
        assert_eq!(b.label_count(LabelId(4)), 1);
    }

    #[test]
    fn rejects_bad_boxes_and_empty_samples() {
        assert!(matches!(BoundingBox::new(1.0, 0.0, 0.0, 1.0), Err(SampleError::NegativeExtent { .. })));
        assert!(BoundingBox::new(1.0, 1.0, 1.0, 1.0).is_ok());
        assert_eq!(BoundingBox::new(f64::NAN, 0.0, 1.0, 1.0), Err(SampleError::NonFinite));
        assert_eq!(Sample::new(ImageId(5), vec![]), Err(SampleError::EmptyAnnotations(ImageId(5))));
    }

    #[test]
    fn sample_json_recomputes_unique_labels() {
        let s = sample(3, &[2, 1, 2], 0.5);
        let json = serde_json::to_string(&s).unwrap();
        let back: Sample = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad = r#"{"image_id": 1, "annotations": [{"label": 1, "box": [2, 0, 1, 1]}]}"#;
        assert!(serde_json::from_str::<Sample>(bad).is_err());
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u64, Vec<u32>),
        Remove(u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u64..12, prop::collection::vec(0u32..5, 1..4)).prop_map(|(i, l)| Op::Insert(i, l)),
            (0u64..12).prop_map(Op::Remove),
        ]
    }

    proptest! {
        #[test]
        fn counts_stay_consistent(cap in 1usize..6, ops in prop::collection::vec(op(), 0..60)) {
            let mut b = Buffer::new(cap).unwrap();
            for o in ops {
                let before: Vec<ImageId> = b.entries().iter().map(|e| e.image_id()).collect();
                match o {
                    Op::Insert(id, labels) => { let _ = b.insert(sample(id, &labels, 1.0)); }
                    Op::Remove(id) => {
                        if b.remove(ImageId(id)).is_ok() {
                            let after: Vec<ImageId> = b.entries().iter().map(|e| e.image_id()).collect();
                            let expected: Vec<ImageId> = before.into_iter().filter(|&x| x != ImageId(id)).collect();
                            prop_assert_eq!(after, expected);
                        }
                    }
                }
                prop_assert!(b.len() <= cap);
                prop_assert_eq!(&b.recount(), b.class_counts());
            }
        }
    }
}
