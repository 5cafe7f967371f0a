use std::collections::HashMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{sample_loss, LossConfig, LossError, LossOracle, Prediction};
use crate::buffer::{ImageId, Sample};

/// One line of an external predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub image_id: ImageId,
    pub predictions: Vec<Prediction>,
}

pub fn read_predictions<R: BufRead>(reader: R) -> Result<HashMap<ImageId, Vec<Prediction>>, LossError> {
    let mut out = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| LossError::File(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord =
            serde_json::from_str(&line).map_err(|e| LossError::File(format!("line {}: {e}", n + 1)))?;
        for p in &rec.predictions {
            p.validate()?;
        }
        if out.insert(rec.image_id, rec.predictions).is_some() {
            return Err(LossError::File(format!("line {}: duplicate image_id {}", n + 1, rec.image_id)));
        }
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut writer: W, records: &[PredictionRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Loss oracle backed by predictions produced outside this engine.
#[derive(Debug, Clone)]
pub struct PredictionFileOracle {
    pub predictions: HashMap<ImageId, Vec<Prediction>>,
    pub loss: LossConfig,
}

impl LossOracle for PredictionFileOracle {
    fn loss(&self, sample: &Sample) -> Result<f64, LossError> {
        let preds = self.predictions.get(&sample.image_id()).ok_or(LossError::NoPredictions(sample.image_id()))?;
        Ok(sample_loss(sample, preds, &self.loss)?.total)
    }
}
