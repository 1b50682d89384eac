//! Dataset ingestion.
//!
//! Datasets are JSONL, one sample per line:
//! `{"sample_id": str, "image": str, "width": int, "height": int,
//!   "expression": str, "gt_bbox": [x1, y1, x2, y2]}`.
//! Every invariant is enforced at load time so downstream scoring can assume
//! clean inputs.

use crate::geometry::BBox;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {reason}")]
    ParseError { line: usize, reason: String },
    #[error("sample {sample_id}: {reason}")]
    InvariantViolation { sample_id: String, reason: String },
    #[error("duplicate sample_id {0:?}")]
    DuplicateSampleId(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// One referring sample: an image, the referring expression, and the
/// ground-truth box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub image: String,
    pub width: u32,
    pub height: u32,
    pub expression: String,
    pub gt_bbox: BBox,
}

impl Sample {
    /// Enforce sample invariants: non-empty expression, positive image
    /// dimensions, and a positive-area ground-truth box inside the image.
    pub fn validate(&self) -> Result<(), DatasetError> {
        let fail = |reason: &str| {
            Err(DatasetError::InvariantViolation {
                sample_id: self.sample_id.clone(),
                reason: reason.to_string(),
            })
        };
        if self.sample_id.is_empty() {
            return fail("sample_id is empty");
        }
        if self.expression.trim().is_empty() {
            return fail("expression is empty");
        }
        if self.width == 0 || self.height == 0 {
            return fail("image dimensions must be positive");
        }
        if !self
            .gt_bbox
            .inside_image(f64::from(self.width), f64::from(self.height))
        {
            return fail("gt_bbox extends outside the image");
        }
        if self.gt_bbox.area() <= 0.0 {
            return fail("gt_bbox has zero area");
        }
        Ok(())
    }
}

/// Load and validate a JSONL dataset, preserving file order.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>, DatasetError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| DatasetError::ParseError {
            line: i + 1,
            reason: e.to_string(),
        })?;
        sample.validate()?;
        if !seen.insert(sample.sample_id.clone()) {
            return Err(DatasetError::DuplicateSampleId(sample.sample_id));
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Write samples as dataset JSONL in the given order.
pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> Result<(), DatasetError> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in samples {
        writeln!(
            out,
            "{}",
            serde_json::to_string(s).expect("sample serializes")
        )?;
    }
    Ok(())
}
