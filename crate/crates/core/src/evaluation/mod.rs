//! Detection evaluation: matching, precision/recall, AP curves and mAP.

mod ap;
pub mod io;
mod matching;
mod summary;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub use ap::{
    average_precision, map_at, map_range, per_class_ap, ApCurve, PrPoint, COCO_IOU_THRESHOLDS, RECALL_SAMPLES,
};
pub use matching::{match_detections, precision, recall, Assignment, MatchResult, Rate};
pub use summary::{evaluate_dataset, ClassAp, EvalConfig, EvalSummary};

pub type ClassId = u32;

/// Opaque image (or frame) identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ImageId(pub String);

impl ImageId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ImageId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A predicted box with its confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class_id: ClassId,
    pub image_id: ImageId,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        confidence: f64,
        class_id: ClassId,
        image_id: impl Into<ImageId>,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidArgument(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            bbox,
            confidence,
            class_id,
            image_id: image_id.into(),
        })
    }
}

/// An annotated (expert-labelled) box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub bbox: BoundingBox,
    pub class_id: ClassId,
    pub image_id: ImageId,
}

impl GroundTruthBox {
    pub fn new(bbox: BoundingBox, class_id: ClassId, image_id: impl Into<ImageId>) -> Self {
        Self {
            bbox,
            class_id,
            image_id: image_id.into(),
        }
    }
}

impl From<String> for ImageId {
    fn from(s: String) -> Self {
        Self(s)
    }
}
