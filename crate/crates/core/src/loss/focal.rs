use crate::buffer::LabelId;

use super::LossError;

pub const PROB_EPS: f64 = 1e-7;

/// Per-class binary focal loss summed over the class universe. The target
/// class contributes `-α (1-p)^γ ln p`, every other class
/// `-(1-α) p^γ ln(1-p)`. Probabilities are clamped to `[ε, 1-ε]`.
pub fn focal_loss(probs: &[f64], target: LabelId, alpha: f64, gamma: f64) -> Result<f64, LossError> {
    if target.index() >= probs.len() {
        return Err(LossError::LabelOutOfRange { label: target, universe: probs.len() });
    }
    let total = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
            if c == target.index() {
                -alpha * (1.0 - p).powf(gamma) * p.ln()
            } else {
                -(1.0 - alpha) * p.powf(gamma) * (1.0 - p).ln()
            }
        })
        .sum();
    Ok(total)
}
