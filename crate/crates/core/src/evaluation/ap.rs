use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::matching::best_unmatched;
use super::{ClassId, Detection, GroundTruthBox, ImageId};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Number of recall sample points (0.00, 0.01, ..., 1.00).
pub const RECALL_SAMPLES: usize = 101;

/// IoU thresholds 0.50:0.05:0.95.
pub const COCO_IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve for one class at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApCurve {
    /// One point per detection, in descending confidence order.
    pub points: Vec<PrPoint>,
    /// Interpolated precision at each of the [`RECALL_SAMPLES`] recall levels.
    pub interpolated: Vec<f64>,
    pub average_precision: f64,
    pub iou_threshold: f64,
    pub ground_truth_count: usize,
}

/// Recall sample `i` of [`RECALL_SAMPLES`].
#[inline]
pub(crate) fn recall_sample(i: usize) -> f64 {
    i as f64 / (RECALL_SAMPLES - 1) as f64
}

fn single_class(dets: &[Detection], gts: &[GroundTruthBox]) -> Result<()> {
    let mut classes = dets
        .iter()
        .map(|d| d.class_id)
        .chain(gts.iter().map(|g| g.class_id));
    if let Some(first) = classes.next() {
        if let Some(other) = classes.find(|c| *c != first) {
            return Err(Error::MixedGroup(format!("classes {first} and {other}")));
        }
    }
    Ok(())
}

/// Average precision of one class over a whole dataset.
///
/// Detections are ranked globally by confidence (ties by image id, then input
/// index) and matched greedily within their image. The curve is integrated by
/// sampling the precision envelope at 101 evenly spaced recall levels.
pub fn average_precision(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Result<ApCurve> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    single_class(dets, gts)?;
    if gts.is_empty() {
        return Err(Error::Undefined(
            "average precision needs at least one ground-truth box".into(),
        ));
    }

    let mut by_image: HashMap<&ImageId, (Vec<&BoundingBox>, Vec<bool>)> = HashMap::new();
    for g in gts {
        let entry = by_image.entry(&g.image_id).or_default();
        entry.0.push(&g.bbox);
        entry.1.push(false);
    }

    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then_with(|| dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });

    let total = gts.len() as f64;
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(dets.len());
    for (rank, &d) in order.iter().enumerate() {
        let det = &dets[d];
        if let Some((boxes, taken)) = by_image.get_mut(&det.image_id) {
            if let Some((g, _)) = best_unmatched(&det.bbox, boxes, taken, iou_threshold) {
                taken[g] = true;
                tp += 1;
            }
        }
        points.push(PrPoint {
            recall: tp as f64 / total,
            precision: tp as f64 / (rank + 1) as f64,
        });
    }

    // Envelope: best precision at any recall at or beyond each point.
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }

    let interpolated: Vec<f64> = (0..RECALL_SAMPLES)
        .map(|i| {
            let r = recall_sample(i);
            let k = points.partition_point(|p| p.recall < r);
            envelope.get(k).copied().unwrap_or(0.0)
        })
        .collect();
    let average_precision = interpolated.iter().sum::<f64>() / RECALL_SAMPLES as f64;

    Ok(ApCurve {
        points,
        interpolated,
        average_precision,
        iou_threshold,
        ground_truth_count: gts.len(),
    })
}

/// Per-class AP; `None` for classes that have detections but no ground truth.
pub fn per_class_ap(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<BTreeMap<ClassId, Option<f64>>> {
    let mut classes: BTreeMap<ClassId, (Vec<Detection>, Vec<GroundTruthBox>)> = BTreeMap::new();
    for d in dets {
        classes.entry(d.class_id).or_default().0.push(d.clone());
    }
    for g in gts {
        classes.entry(g.class_id).or_default().1.push(g.clone());
    }
    classes
        .into_iter()
        .map(|(class, (d, g))| {
            let ap = if g.is_empty() {
                None
            } else {
                Some(average_precision(&d, &g, iou_threshold)?.average_precision)
            };
            Ok((class, ap))
        })
        .collect()
}

/// Unweighted mean of per-class AP at one IoU threshold.
pub fn map_at(dets: &[Detection], gts: &[GroundTruthBox], iou_threshold: f64) -> Result<f64> {
    let defined: Vec<f64> = per_class_ap(dets, gts, iou_threshold)?
        .into_values()
        .flatten()
        .collect();
    if defined.is_empty() {
        return Err(Error::Undefined("no class has ground truth".into()));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mean of [`map_at`] over the ten thresholds 0.50:0.05:0.95.
pub fn map_range(dets: &[Detection], gts: &[GroundTruthBox]) -> Result<f64> {
    let mut sum = 0.0;
    for t in COCO_IOU_THRESHOLDS {
        sum += map_at(dets, gts, t)?;
    }
    Ok(sum / COCO_IOU_THRESHOLDS.len() as f64)
}
