use serde::{Deserialize, Serialize};

use super::{ClassId, Detection, GroundTruthBox, ImageId};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

/// One detection-to-ground-truth pairing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Ordered by matching priority (descending detection confidence).
    pub assignments: Vec<Assignment>,
}

impl MatchResult {
    pub fn merge(&mut self, other: &MatchResult) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
    }
}

/// A ratio that may have had a zero denominator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rate {
    pub value: f64,
    /// Set when the denominator was zero; `value` is then 1.0.
    pub undefined: bool,
}

impl Rate {
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Rate {
                value: 1.0,
                undefined: true,
            }
        } else {
            Rate {
                value: num as f64 / den as f64,
                undefined: false,
            }
        }
    }
}

/// `TP / (TP + FP)`; 1.0 flagged undefined when there are no detections.
pub fn precision(m: &MatchResult) -> Rate {
    Rate::ratio(m.true_positives, m.true_positives + m.false_positives)
}

/// `TP / (TP + FN)`; 1.0 flagged undefined when there is no ground truth.
pub fn recall(m: &MatchResult) -> Rate {
    Rate::ratio(m.true_positives, m.true_positives + m.false_negatives)
}

/// Detection indices by descending confidence, ties by lower index.
pub(crate) fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

/// Best still-unmatched ground truth for `det` with IoU at or above `threshold`.
/// Equal IoUs resolve to the lower ground-truth index.
pub(crate) fn best_unmatched(
    det: &BoundingBox,
    gts: &[&BoundingBox],
    taken: &[bool],
    threshold: f64,
) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if taken[g] {
            continue;
        }
        let v = iou(det, gt);
        if v >= threshold && best.is_none_or(|(_, b)| v > b) {
            best = Some((g, v));
        }
    }
    best
}

fn check_threshold(t: f64) -> Result<()> {
    if t > 0.0 && t <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "IoU threshold {t} outside (0, 1]"
        )))
    }
}

fn common_group(dets: &[Detection], gts: &[GroundTruthBox]) -> Result<()> {
    let mut key: Option<(&ImageId, ClassId)> = None;
    let items = dets
        .iter()
        .map(|d| (&d.image_id, d.class_id))
        .chain(gts.iter().map(|g| (&g.image_id, g.class_id)));
    for (image, class) in items {
        match key {
            None => key = Some((image, class)),
            Some((i, _)) if i != image => {
                return Err(Error::MixedGroup(format!("images {i} and {image}")));
            }
            Some((_, c)) if c != class => {
                return Err(Error::MixedGroup(format!("classes {c} and {class}")));
            }
            _ => {}
        }
    }
    Ok(())
}

/// Greedy one-to-one matching for a single image and class.
///
/// Detections are visited by descending confidence; each takes the unmatched
/// ground truth with the highest IoU if that IoU is at least `iou_threshold`.
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_threshold(iou_threshold)?;
    common_group(dets, gts)?;

    let gt_boxes: Vec<&BoundingBox> = gts.iter().map(|g| &g.bbox).collect();
    let mut taken = vec![false; gts.len()];
    let mut assignments = Vec::new();
    for d in confidence_order(dets) {
        if let Some((g, v)) = best_unmatched(&dets[d].bbox, &gt_boxes, &taken, iou_threshold) {
            taken[g] = true;
            assignments.push(Assignment {
                detection: d,
                ground_truth: g,
                iou: v,
            });
        }
    }
    let tp = assignments.len();
    Ok(MatchResult {
        true_positives: tp,
        false_positives: dets.len() - tp,
        false_negatives: gts.len() - tp,
        assignments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(c: [f64; 4], conf: f64) -> Detection {
        Detection::new(BoundingBox::from_array(c).unwrap(), conf, 0, "img").unwrap()
    }

    fn gt(c: [f64; 4]) -> GroundTruthBox {
        GroundTruthBox::new(BoundingBox::from_array(c).unwrap(), 0, "img")
    }

    #[test]
    fn duplicate_detection_becomes_false_positive() {
        let gts = [gt([0., 0., 10., 10.])];
        let dets = [det([0., 0., 10., 9.], 0.6), det([0., 0., 10., 10.], 0.9)];
        let m = match_detections(&dets, &gts, 0.5).unwrap();
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (1, 1, 0)
        );
        assert_eq!(m.assignments[0].detection, 1);
    }

    #[test]
    fn no_detections() {
        let gts = [gt([0., 0., 1., 1.]), gt([2., 2., 3., 3.]), gt([4., 4., 5., 5.])];
        let m = match_detections(&[], &gts, 0.5).unwrap();
        assert_eq!(
            (m.true_positives, m.false_positives, m.false_negatives),
            (0, 0, 3)
        );
    }

    #[test]
    fn iou_tie_goes_to_lower_index() {
        let gts = [gt([0., 0., 2., 2.]), gt([2., 0., 4., 2.])];
        let m = match_detections(&[det([1., 0., 3., 2.], 0.5)], &gts, 0.3).unwrap();
        assert_eq!(m.assignments[0].ground_truth, 0);
    }

    #[test]
    fn threshold_is_inclusive() {
        let gts = [gt([0., 0., 10., 10.])];
        let m = match_detections(&[det([0., 0., 10., 6.], 0.5)], &gts, 0.6).unwrap();
        assert_eq!(m.true_positives, 1);
    }

    #[test]
    fn mixed_images_rejected() {
        let mut other = det([0., 0., 1., 1.], 0.5);
        other.image_id = ImageId::new("other");
        assert!(matches!(
            match_detections(&[other], &[gt([0., 0., 1., 1.])], 0.5),
            Err(Error::MixedGroup(_))
        ));
    }

    #[test]
    fn rejects_bad_threshold() {
        assert!(match_detections(&[], &[], 0.0).is_err());
        assert!(match_detections(&[], &[], 1.5).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        let m = |tp, fp, fn_| MatchResult {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            assignments: vec![],
        };
        assert_eq!(precision(&m(3, 1, 0)).value, 0.75);
        assert_eq!(precision(&m(0, 5, 0)).value, 0.0);
        assert_eq!(precision(&m(5, 0, 0)).value, 1.0);
        assert_eq!(recall(&m(3, 0, 2)).value, 0.6);
        assert_eq!(recall(&m(0, 0, 4)).value, 0.0);
        assert_eq!(recall(&m(7, 0, 0)).value, 1.0);

        let p = precision(&m(0, 0, 3));
        assert!(p.undefined && p.value == 1.0);
        let r = recall(&m(0, 2, 0));
        assert!(r.undefined && r.value == 1.0);
        assert!(!recall(&m(0, 0, 4)).undefined);
    }
}
