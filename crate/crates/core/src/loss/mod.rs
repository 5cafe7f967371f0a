//! Per-sample detection loss: L1 box loss + GIoU loss + focal label loss,
//! averaged over the prediction/ground-truth pairs chosen by the assignment
//! solver. Also provides the loss oracles the strategies consume.

mod focal;
mod geometry;
mod matching;
mod predictions;
mod surrogate;

pub use focal::{focal_loss, PROB_EPS};
pub use geometry::{giou, giou_loss, intersection_area, iou, l1_box_loss};
pub use matching::{hungarian_match, Assignment, CostMatrix};
pub use predictions::{read_predictions, write_predictions, PredictionFileOracle, PredictionRecord};
pub use surrogate::{surrogate_predict, SurrogateConfig, SurrogateOracle};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{BoundingBox, ImageId, LabelId, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("both boxes have zero area")]
    DegenerateBox,
    #[error("cost matrix contains a non-finite value")]
    NonFiniteCost,
    #[error("cost matrix is empty")]
    EmptyMatrix,
    #[error("label {label} outside a class universe of size {universe}")]
    LabelOutOfRange { label: LabelId, universe: usize },
    #[error("image {0} has no predictions")]
    NoPredictions(ImageId),
    #[error("invalid prediction: {0}")]
    InvalidPrediction(String),
    #[error("invalid surrogate config: {0}")]
    InvalidConfig(String),
    #[error("predictions file: {0}")]
    File(String),
}

/// Detector output for one query: a box plus per-class sigmoid scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    #[serde(rename = "probs")]
    pub class_probs: Vec<f64>,
}

impl Prediction {
    pub fn new(bbox: BoundingBox, class_probs: Vec<f64>) -> Result<Self, LossError> {
        let p = Self { bbox, class_probs };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), LossError> {
        if self.class_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(LossError::InvalidPrediction("class probabilities must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_bbox: f64,
    pub l_giou: f64,
    pub l_label: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_bbox: f64, l_giou: f64, l_label: f64) -> Self {
        Self { l_bbox, l_giou, l_label, total: l_bbox + l_giou + l_label }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub bbox_weight: f64,
    pub giou_weight: f64,
    pub label_weight: f64,
    /// Divide box coordinates by the image width/height in the L1 term.
    pub normalize_boxes: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            bbox_weight: 1.0,
            giou_weight: 1.0,
            label_weight: 1.0,
            normalize_boxes: false,
        }
    }
}

/// GIoU loss of a degenerate pair.
pub const MAX_GIOU_LOSS: f64 = 2.0;

struct PairTerms {
    l1: f64,
    giou: f64,
    label: f64,
}

fn pair_terms(
    pred: &Prediction,
    gt: &crate::buffer::Annotation,
    scale: Option<(f64, f64)>,
    cfg: &LossConfig,
) -> Result<PairTerms, LossError> {
    let l1 = l1_box_loss(&pred.bbox, &gt.bbox, scale);
    let giou = match giou_loss(&pred.bbox, &gt.bbox) {
        Ok(g) => g,
        Err(LossError::DegenerateBox) => MAX_GIOU_LOSS,
        Err(e) => return Err(e),
    };
    let label = focal_loss(&pred.class_probs, gt.label, cfg.focal_alpha, cfg.focal_gamma)?;
    Ok(PairTerms { l1: cfg.bbox_weight * l1, giou: cfg.giou_weight * giou, label: cfg.label_weight * label })
}

/// Mean over matched pairs of each weighted loss term.
pub fn sample_loss(sample: &Sample, predictions: &[Prediction], cfg: &LossConfig) -> Result<LossBreakdown, LossError> {
    if predictions.is_empty() {
        return Err(LossError::NoPredictions(sample.image_id()));
    }
    let gts = sample.annotations();
    let scale = if cfg.normalize_boxes { sample.image_size() } else { None };
    let mut terms = Vec::with_capacity(predictions.len() * gts.len());
    for p in predictions {
        for g in gts {
            terms.push(pair_terms(p, g, scale, cfg)?);
        }
    }
    let costs = terms.iter().map(|t| t.l1 + t.giou + t.label).collect();
    let matrix = CostMatrix::new(predictions.len(), gts.len(), costs)?;
    let assignment = hungarian_match(&matrix);
    if gts.len() > predictions.len() {
        log::warn!(
            "image {}: {} ground-truth boxes but only {} predictions; unmatched boxes are ignored",
            sample.image_id(),
            gts.len(),
            predictions.len()
        );
    }
    let n = assignment.pairs.len() as f64;
    let (mut l1, mut gi, mut lab) = (0.0, 0.0, 0.0);
    for &(p, g) in &assignment.pairs {
        let t = &terms[p * gts.len() + g];
        l1 += t.l1;
        gi += t.giou;
        lab += t.label;
    }
    Ok(LossBreakdown::new(l1 / n, gi / n, lab / n))
}

/// Supplies the loss `L_d` of a sample under the current model.
pub trait LossOracle {
    fn loss(&self, sample: &Sample) -> Result<f64, LossError>;
}

impl<F> LossOracle for F
where
    F: Fn(&Sample) -> Result<f64, LossError>,
{
    fn loss(&self, sample: &Sample) -> Result<f64, LossError> {
        self(sample)
    }
}
