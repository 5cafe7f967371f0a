use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{sample_loss, LossConfig, LossError, LossOracle, Prediction};
use crate::buffer::{BoundingBox, Sample};
use crate::seed::derived_rng;

/// Noise model standing in for a trained detector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurrogateConfig {
    /// Coordinate jitter as a fraction of the box width/height.
    pub box_noise_sigma: f64,
    pub prob_correct_mean: f64,
    pub prob_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { box_noise_sigma: 0.1, prob_correct_mean: 0.7, prob_noise_sigma: 0.15, seed: 0 }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(self.box_noise_sigma >= 0.0 && self.box_noise_sigma.is_finite()) {
            return Err(LossError::InvalidConfig("box_noise_sigma must be >= 0".into()));
        }
        if !(self.prob_correct_mean > 0.0 && self.prob_correct_mean <= 1.0) {
            return Err(LossError::InvalidConfig("prob_correct_mean must lie in (0, 1]".into()));
        }
        if !(self.prob_noise_sigma >= 0.0 && self.prob_noise_sigma.is_finite()) {
            return Err(LossError::InvalidConfig("prob_noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// One prediction per annotation. The random stream depends only on
/// `(cfg.seed, image_id)`.
pub fn surrogate_predict(
    sample: &Sample,
    cfg: &SurrogateConfig,
    n_classes: usize,
) -> Result<Vec<Prediction>, LossError> {
    cfg.validate()?;
    let mut rng = derived_rng(cfg.seed, &format!("surrogate/image/{}", sample.image_id()));
    let mut gauss = move || rng.sample::<f64, _>(StandardNormal);
    sample
        .annotations()
        .iter()
        .map(|a| {
            if a.label.index() >= n_classes {
                return Err(LossError::LabelOutOfRange { label: a.label, universe: n_classes });
            }
            let b = &a.bbox;
            let (w, h) = (b.width(), b.height());
            let s = cfg.box_noise_sigma;
            let x0 = b.x_min() + gauss() * s * w;
            let y0 = b.y_min() + gauss() * s * h;
            let x1 = b.x_max() + gauss() * s * w;
            let y1 = b.y_max() + gauss() * s * h;
            let bbox = BoundingBox::new(x0.min(x1), y0.min(y1), x0.max(x1), y0.max(y1))
                .map_err(|e| LossError::InvalidPrediction(e.to_string()))?;
            let mut probs = Vec::with_capacity(n_classes);
            for c in 0..n_classes {
                let noise = gauss() * cfg.prob_noise_sigma;
                let p = if c == a.label.index() { cfg.prob_correct_mean + noise } else { noise.abs() };
                probs.push(p.clamp(0.0, 1.0));
            }
            Prediction::new(bbox, probs)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateOracle {
    pub surrogate: SurrogateConfig,
    pub loss: LossConfig,
    pub n_classes: usize,
}

impl LossOracle for SurrogateOracle {
    fn loss(&self, sample: &Sample) -> Result<f64, LossError> {
        let preds = surrogate_predict(sample, &self.surrogate, self.n_classes)?;
        Ok(sample_loss(sample, &preds, &self.loss)?.total)
    }
}
