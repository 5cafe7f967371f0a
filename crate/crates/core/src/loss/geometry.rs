use crate::buffer::BoundingBox;

use super::LossError;

/// Sum of absolute coordinate differences. With `scale = Some((w, h))` the
/// x coordinates are divided by `w` and the y coordinates by `h` first.
pub fn l1_box_loss(pred: &BoundingBox, gt: &BoundingBox, scale: Option<(f64, f64)>) -> f64 {
    let (sx, sy) = scale.unwrap_or((1.0, 1.0));
    (pred.x_min() - gt.x_min()).abs() / sx
        + (pred.y_min() - gt.y_min()).abs() / sy
        + (pred.x_max() - gt.x_max()).abs() / sx
        + (pred.y_max() - gt.y_max()).abs() / sy
}

pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = (a.x_max().min(b.x_max()) - a.x_min().max(b.x_min())).max(0.0);
    let h = (a.y_max().min(b.y_max()) - a.y_min().max(b.y_min())).max(0.0);
    w * h
}

fn enclosing_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max().max(b.x_max()) - a.x_min().min(b.x_min());
    let h = a.y_max().max(b.y_max()) - a.y_min().min(b.y_min());
    w * h
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, LossError> {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Err(LossError::DegenerateBox);
    }
    Ok(inter / union)
}

/// Generalized IoU: `IoU - |C \ (A ∪ B)| / |C|` with `C` the smallest
/// enclosing box. Fails when the union has zero area.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64, LossError> {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return Err(LossError::DegenerateBox);
    }
    let hull = enclosing_area(a, b);
    let value = inter / union - (hull - union) / hull;
    Ok(value.clamp(-1.0, 1.0))
}

pub fn giou_loss(a: &BoundingBox, b: &BoundingBox) -> Result<f64, LossError> {
    giou(a, b).map(|g| 1.0 - g)
}
