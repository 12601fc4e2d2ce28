//! Class-aware hard non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::Detection;
use crate::geometry::iou;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NmsConfig {
    /// Same-class candidates with IoU at or above this against a kept box are dropped.
    pub iou_threshold: f64,
    /// Candidates below this confidence are discarded up front.
    pub confidence_floor: f64,
    pub max_detections: usize,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.45,
            confidence_floor: 0.25,
            max_detections: 300,
        }
    }
}

impl NmsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "NMS IoU threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.confidence_floor) {
            return Err(Error::InvalidArgument(format!(
                "confidence floor {} outside [0, 1)",
                self.confidence_floor
            )));
        }
        if self.max_detections == 0 {
            return Err(Error::InvalidArgument("max_detections must be positive".into()));
        }
        Ok(())
    }
}

/// Greedy suppression. Output is sorted by descending confidence (ties by
/// input order) and holds at most `cfg.max_detections` boxes.
pub fn suppress(candidates: &[Detection], cfg: &NmsConfig) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..candidates.len())
        .filter(|&i| candidates[i].confidence >= cfg.confidence_floor)
        .collect();
    order.sort_by(|&a, &b| candidates[b].confidence.total_cmp(&candidates[a].confidence));

    let mut kept: Vec<&Detection> = Vec::new();
    for i in order {
        if kept.len() == cfg.max_detections {
            break;
        }
        let c = &candidates[i];
        let overlaps = kept
            .iter()
            .any(|k| k.class_id == c.class_id && iou(&k.bbox, &c.bbox) >= cfg.iou_threshold);
        if !overlaps {
            kept.push(c);
        }
    }
    kept.into_iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn det(c: [f64; 4], conf: f64, class: u32) -> Detection {
        Detection::new(BoundingBox::from_array(c).unwrap(), conf, class, "f").unwrap()
    }

    #[test]
    fn empty_in_empty_out() {
        assert!(suppress(&[], &NmsConfig::default()).is_empty());
    }

    #[test]
    fn single_candidate_survives() {
        let d = det([0., 0., 1., 1.], 0.5, 0);
        assert_eq!(suppress(std::slice::from_ref(&d), &NmsConfig::default()), vec![d]);
    }

    #[test]
    fn overlapping_pair_keeps_the_stronger() {
        // IoU = 0.9
        let a = det([0., 0., 10., 10.], 0.8, 0);
        let b = det([0., 0., 10., 9.], 0.9, 0);
        let out = suppress(&[a, b.clone()], &NmsConfig::default());
        assert_eq!(out, vec![b]);
    }

    #[test]
    fn other_class_is_not_suppressed() {
        let a = det([0., 0., 10., 10.], 0.8, 1);
        let b = det([0., 0., 10., 10.], 0.9, 0);
        assert_eq!(suppress(&[a, b], &NmsConfig::default()).len(), 2);
    }

    #[test]
    fn floor_and_cap() {
        let cands: Vec<_> = (0..10)
            .map(|i| {
                det(
                    [i as f64 * 10., 0., i as f64 * 10. + 5., 5.],
                    0.05 * (i + 1) as f64,
                    0,
                )
            })
            .collect();
        let cfg = NmsConfig {
            max_detections: 3,
            ..NmsConfig::default()
        };
        let out = suppress(&cands, &cfg);
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].confidence, cands[9].confidence);
        assert!(out.windows(2).all(|w| w[0].confidence >= w[1].confidence));
    }

    #[test]
    fn config_validation() {
        assert!(NmsConfig::default().validate().is_ok());
        let bad = NmsConfig {
            iou_threshold: 0.0,
            ..NmsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = NmsConfig {
            confidence_floor: 1.0,
            ..NmsConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
