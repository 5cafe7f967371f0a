use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, DatasetSource, IngestError};
use crate::buffer::{Annotation, BoundingBox, ImageId, LabelId, Sample};
use crate::seed::derived_rng;

/// Long-tailed synthetic annotation stream. Class `c` (0-based) is drawn
/// with weight `(c + 1)^-zipf_exponent`, so low ids are the head classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticStreamConfig {
    pub n_classes: usize,
    pub n_samples: usize,
    pub zipf_exponent: f64,
    /// Inclusive range of distinct labels per sample.
    pub labels_per_sample: [usize; 2],
    /// Inclusive range of boxes per label.
    pub instances_per_label: [usize; 2],
    pub image_extent: f64,
    pub seed: u64,
}

impl Default for SyntheticStreamConfig {
    fn default() -> Self {
        Self {
            n_classes: 80,
            n_samples: 200,
            zipf_exponent: 1.2,
            labels_per_sample: [1, 4],
            instances_per_label: [1, 3],
            image_extent: 640.0,
            seed: 0,
        }
    }
}

impl SyntheticStreamConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        let bad = |m: &str| Err(IngestError::InvalidConfig(m.to_string()));
        if self.n_classes == 0 || self.n_samples == 0 {
            return bad("n_classes and n_samples must be positive");
        }
        if !(self.zipf_exponent >= 0.0 && self.zipf_exponent.is_finite()) {
            return bad("zipf_exponent must be >= 0");
        }
        let [lo, hi] = self.labels_per_sample;
        if lo == 0 || lo > hi || hi > self.n_classes {
            return bad("labels_per_sample must satisfy 1 <= min <= max <= n_classes");
        }
        let [lo, hi] = self.instances_per_label;
        if lo == 0 || lo > hi {
            return bad("instances_per_label must satisfy 1 <= min <= max");
        }
        if !(self.image_extent >= 1.0 && self.image_extent.is_finite()) {
            return bad("image_extent must be >= 1");
        }
        Ok(())
    }
}

/// Boxes snap to integer pixel coordinates so COCO export is exact.
pub fn synthetic_stream(cfg: &SyntheticStreamConfig) -> Result<DatasetManifest, IngestError> {
    cfg.validate()?;
    let mut rng = derived_rng(cfg.seed, "synthetic");
    let weights: Vec<f64> = (0..cfg.n_classes).map(|c| ((c + 1) as f64).powf(-cfg.zipf_exponent)).collect();
    let extent = cfg.image_extent.floor() as u64;

    let mut samples = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let k = rng.random_range(cfg.labels_per_sample[0]..=cfg.labels_per_sample[1]);
        let mut live = weights.clone();
        let mut anns = Vec::new();
        for _ in 0..k {
            let dist = WeightedIndex::new(&live).expect("at least k classes remain");
            let c = dist.sample(&mut rng);
            live[c] = 0.0;
            let copies = rng.random_range(cfg.instances_per_label[0]..=cfg.instances_per_label[1]);
            for _ in 0..copies {
                let x = rng.random_range(0..extent);
                let y = rng.random_range(0..extent);
                let w = rng.random_range(1..=extent - x);
                let h = rng.random_range(1..=extent - y);
                let bbox = BoundingBox::from_xywh(x as f64, y as f64, w as f64, h as f64).expect("positive box");
                anns.push(Annotation::new(LabelId(c as u32), bbox));
            }
        }
        let s = Sample::new(ImageId(i as u64 + 1), anns).expect("k >= 1").with_image_size(extent as f64, extent as f64);
        samples.push(s);
    }
    let categories = (0..cfg.n_classes).map(|c| (LabelId(c as u32), format!("class_{c}"))).collect();
    Ok(DatasetManifest { samples, categories, source: DatasetSource::Synthetic })
}
