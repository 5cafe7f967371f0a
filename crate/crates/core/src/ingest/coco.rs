use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, DatasetSource, IngestError};
use crate::buffer::{Annotation, BoundingBox, ImageId, LabelId, Sample};

/// The subset of the COCO instances schema this engine reads and writes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u32,
    pub name: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub images: usize,
    pub annotations: usize,
    pub samples: usize,
    pub dropped_empty: usize,
    pub duplicate_annotation_ids: usize,
    /// Samples containing each category.
    pub class_frequencies: BTreeMap<LabelId, usize>,
}

pub fn parse_coco(path: &Path) -> Result<(DatasetManifest, LoadReport), IngestError> {
    let file = std::fs::File::open(path)?;
    parse_coco_reader(std::io::BufReader::new(file))
}

pub fn parse_coco_str(text: &str) -> Result<(DatasetManifest, LoadReport), IngestError> {
    let coco: CocoFile = serde_json::from_str(text).map_err(|e| IngestError::MalformedFile(e.to_string()))?;
    from_coco(coco)
}

pub fn parse_coco_reader<R: Read>(reader: R) -> Result<(DatasetManifest, LoadReport), IngestError> {
    let coco: CocoFile = serde_json::from_reader(reader).map_err(|e| IngestError::MalformedFile(e.to_string()))?;
    from_coco(coco)
}

fn from_coco(coco: CocoFile) -> Result<(DatasetManifest, LoadReport), IngestError> {
    let mut categories = BTreeMap::new();
    for c in &coco.categories {
        if categories.insert(LabelId(c.id), c.name.clone()).is_some() {
            return Err(IngestError::MalformedFile(format!("duplicate category id {}", c.id)));
        }
    }

    let mut per_image: HashMap<u64, Vec<Annotation>> = HashMap::new();
    let mut image_index = HashSet::new();
    for img in &coco.images {
        if !image_index.insert(img.id) {
            return Err(IngestError::MalformedFile(format!("duplicate image id {}", img.id)));
        }
    }

    let mut ann_ids = HashSet::new();
    let mut duplicates = 0;
    for a in &coco.annotations {
        if !ann_ids.insert(a.id) {
            duplicates += 1;
            log::warn!("duplicate annotation id {}", a.id);
        }
        if !image_index.contains(&a.image_id) {
            return Err(IngestError::MalformedFile(format!(
                "annotation {} references unknown image_id {}",
                a.id, a.image_id
            )));
        }
        let label = LabelId(a.category_id);
        if !categories.contains_key(&label) {
            return Err(IngestError::MalformedFile(format!(
                "annotation {} references unknown category_id {}",
                a.id, a.category_id
            )));
        }
        let [x, y, w, h] = a.bbox;
        if w < 0.0 || h < 0.0 {
            return Err(IngestError::NegativeExtent { annotation_id: a.id, w, h });
        }
        let bbox = BoundingBox::from_xywh(x, y, w, h)
            .map_err(|e| IngestError::MalformedFile(format!("annotation {}: {e}", a.id)))?;
        per_image.entry(a.image_id).or_default().push(Annotation::new(label, bbox));
    }

    let mut samples = Vec::with_capacity(per_image.len());
    let mut dropped = 0;
    for img in &coco.images {
        match per_image.remove(&img.id) {
            Some(anns) => {
                let mut s = Sample::new(ImageId(img.id), anns).expect("non-empty");
                if let (Some(w), Some(h)) = (img.width, img.height) {
                    s = s.with_image_size(w, h);
                }
                samples.push(s);
            }
            None => dropped += 1,
        }
    }

    let manifest = DatasetManifest { samples, categories, source: DatasetSource::Coco };
    let report = LoadReport {
        images: coco.images.len(),
        annotations: coco.annotations.len(),
        samples: manifest.samples.len(),
        dropped_empty: dropped,
        duplicate_annotation_ids: duplicates,
        class_frequencies: manifest.class_frequencies(),
    };
    Ok((manifest, report))
}

/// Converts a manifest back to COCO form. Annotation ids are renumbered
/// from 1 in sample order.
pub fn export_coco(manifest: &DatasetManifest) -> CocoFile {
    let mut images = Vec::with_capacity(manifest.samples.len());
    let mut annotations = Vec::new();
    for s in &manifest.samples {
        let (width, height) = s.image_size().map_or((None, None), |(w, h)| (Some(w), Some(h)));
        images.push(CocoImage { id: s.image_id().0, width, height, file_name: None });
        for a in s.annotations() {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id: s.image_id().0,
                category_id: a.label.0,
                bbox: a.bbox.to_xywh(),
            });
        }
    }
    let categories =
        manifest.categories.iter().map(|(id, name)| CocoCategory { id: id.0, name: name.clone() }).collect();
    CocoFile { images, annotations, categories }
}

pub fn write_coco<W: Write>(writer: W, manifest: &DatasetManifest) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(writer, &export_coco(manifest))
}
