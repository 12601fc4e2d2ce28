//! Reference implementations and scene generators shared by the
//! integration tests. Nothing here calls into the library's matching, AP,
//! IoU or NMS code; the oracles work on plain `[f64; 4]` corner arrays.

#![allow(dead_code)]

use hivewatch_core::dataset::{AnnotatedImage, Annotation};
use hivewatch_core::evaluation::{Detection, GroundTruthBox};
use hivewatch_core::geometry::{BoundingBox, NormalizedCenterBox};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Corners = [f64; 4];

pub fn corners(b: &BoundingBox) -> Corners {
    [b.x_min(), b.y_min(), b.x_max(), b.y_max()]
}

/// Overlap divided by union, straight from the definition.
pub fn iou_oracle(a: Corners, b: Corners) -> f64 {
    let ix = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let iy = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    let inter = ix * iy;
    let area = |c: Corners| (c[2] - c[0]) * (c[3] - c[1]);
    let union = area(a) + area(b) - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

/// Random box with corners in `[0, extent]` and positive size.
pub fn random_box(rng: &mut ChaCha8Rng, extent: f64) -> BoundingBox {
    let w = rng.random_range(0.01..0.6) * extent;
    let h = rng.random_range(0.01..0.6) * extent;
    let x = rng.random_range(0.0..extent - w);
    let y = rng.random_range(0.0..extent - h);
    BoundingBox::new(x, y, x + w, y + h).unwrap()
}

/// Box near `base`: same size class, shifted and rescaled a little, so
/// scenes contain a useful mix of overlap levels.
pub fn nearby_box(rng: &mut ChaCha8Rng, base: &BoundingBox) -> BoundingBox {
    let c = corners(base);
    let (w, h) = (c[2] - c[0], c[3] - c[1]);
    let dx = rng.random_range(-0.5..0.5) * w;
    let dy = rng.random_range(-0.5..0.5) * h;
    let sw = w * rng.random_range(0.7..1.3);
    let sh = h * rng.random_range(0.7..1.3);
    let x = c[0] + dx;
    let y = c[1] + dy;
    BoundingBox::new(x, y, x + sw, y + sh).unwrap()
}

/// One scene: up to `max_images` images, up to `max_boxes` truth boxes and
/// detections per image, single class, distinct confidences.
pub struct Scene {
    pub truth: Vec<GroundTruthBox>,
    pub detections: Vec<Detection>,
}

pub fn random_scene(rng: &mut ChaCha8Rng, max_images: usize, max_boxes: usize) -> Scene {
    let images = rng.random_range(1..=max_images);
    let mut truth = Vec::new();
    let mut detections = Vec::new();
    let mut confs: Vec<f64> = Vec::new();
    for i in 0..images {
        let id = format!("img{i}");
        let n_gt = rng.random_range(0..=max_boxes);
        let gts: Vec<BoundingBox> = (0..n_gt).map(|_| random_box(rng, 100.0)).collect();
        for g in &gts {
            truth.push(GroundTruthBox::new(*g, 0, id.as_str()));
        }
        let n_det = rng.random_range(0..=max_boxes);
        for _ in 0..n_det {
            let bbox = if !gts.is_empty() && rng.random_bool(0.7) {
                let k = rng.random_range(0..gts.len());
                nearby_box(rng, &gts[k])
            } else {
                random_box(rng, 100.0)
            };
            let conf = loop {
                let c: f64 = rng.random_range(0.0..1.0);
                if !confs.contains(&c) {
                    confs.push(c);
                    break c;
                }
            };
            detections.push(Detection::new(bbox, conf, 0, id.as_str()).unwrap());
        }
    }
    // every scene needs at least one truth box for AP to be defined
    if truth.is_empty() {
        truth.push(GroundTruthBox::new(random_box(rng, 100.0), 0, "img0"));
    }
    Scene { truth, detections }
}

/// Greedy assignment for one image: detections in descending confidence
/// (ties to the lower index) each claim the unclaimed truth box of highest
/// IoU at or above `t` (ties to the lower index). Returns
/// `(detection, truth)` pairs in claim order.
pub fn greedy_oracle(dets: &[(Corners, f64)], gts: &[Corners], t: f64) -> Vec<(usize, usize)> {
    let mut remaining: Vec<usize> = (0..dets.len()).collect();
    let mut claimed = vec![false; gts.len()];
    let mut pairs = Vec::new();
    while !remaining.is_empty() {
        // pick the next detection by a linear scan rather than a sort
        let mut pick = 0;
        for k in 1..remaining.len() {
            if dets[remaining[k]].1 > dets[remaining[pick]].1 {
                pick = k;
            }
        }
        let d = remaining.remove(pick);
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let v = iou_oracle(dets[d].0, *gt);
            if v >= t && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            pairs.push((d, g));
        }
    }
    pairs
}

/// Exact area under the interpolated (monotone envelope) precision-recall
/// step curve, summed over recall increments.
pub fn exact_ap_oracle(dets: &[Detection], gts: &[GroundTruthBox], t: f64) -> f64 {
    let mut ranked: Vec<&Detection> = dets.iter().collect();
    ranked.sort_by(|a, b| b.confidence.partial_cmp(&a.confidence).unwrap());
    let mut claimed: Vec<bool> = vec![false; gts.len()];
    let mut tp = 0usize;
    let mut curve: Vec<(f64, f64)> = Vec::new();
    for (k, d) in ranked.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if claimed[g] || gt.image_id != d.image_id {
                continue;
            }
            let v = iou_oracle(corners(&d.bbox), corners(&gt.bbox));
            if v >= t && best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        if let Some((g, _)) = best {
            claimed[g] = true;
            tp += 1;
        }
        curve.push((tp as f64 / gts.len() as f64, tp as f64 / (k + 1) as f64));
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(r, _)) in curve.iter().enumerate() {
        if r > prev_recall {
            let envelope = curve[i..].iter().map(|p| p.1).fold(0.0, f64::max);
            area += (r - prev_recall) * envelope;
            prev_recall = r;
        }
    }
    area
}

/// Reference suppression: repeatedly take the strongest remaining candidate
/// above the floor and discard every same-class candidate overlapping it.
pub fn nms_oracle(cands: &[Detection], iou_t: f64, floor: f64, cap: usize) -> Vec<Detection> {
    let mut pool: Vec<&Detection> = cands.iter().filter(|c| c.confidence >= floor).collect();
    let mut kept = Vec::new();
    while !pool.is_empty() && kept.len() < cap {
        let mut top = 0;
        for i in 1..pool.len() {
            if pool[i].confidence > pool[top].confidence {
                top = i;
            }
        }
        let best = pool.remove(top);
        pool.retain(|c| {
            c.class_id != best.class_id || iou_oracle(corners(&c.bbox), corners(&best.bbox)) < iou_t
        });
        kept.push(best.clone());
    }
    kept
}

pub fn random_candidates(rng: &mut ChaCha8Rng, max: usize) -> Vec<Detection> {
    let n = rng.random_range(0..=max);
    let mut out: Vec<Detection> = Vec::with_capacity(n);
    let mut anchors: Vec<BoundingBox> = Vec::new();
    for _ in 0..n {
        let bbox = if !anchors.is_empty() && rng.random_bool(0.6) {
            let k = rng.random_range(0..anchors.len());
            nearby_box(rng, &anchors[k])
        } else {
            let b = random_box(rng, 200.0);
            anchors.push(b);
            b
        };
        let conf = loop {
            let c: f64 = rng.random_range(0.0..1.0);
            if out.iter().all(|d| d.confidence != c) {
                break c;
            }
        };
        let class = rng.random_range(0..3);
        out.push(Detection::new(bbox, conf, class, "frame").unwrap());
    }
    out
}

/// Corpus whose per-image box counts follow `histogram` (index = count).
pub fn corpus_from_histogram(histogram: &[usize]) -> Vec<AnnotatedImage> {
    let mut corpus = Vec::new();
    for (count, &images) in histogram.iter().enumerate() {
        for _ in 0..images {
            let id = format!("{:05}", corpus.len());
            let annotations = (0..count)
                .map(|k| Annotation {
                    class_id: 0,
                    bbox: NormalizedCenterBox::new((k as f64 + 0.5) / (count as f64 + 1.0), 0.5, 0.05, 0.08)
                        .unwrap(),
                })
                .collect();
            corpus.push(AnnotatedImage::new(id, 416, 416, annotations).unwrap());
        }
    }
    corpus
}

pub fn random_corpus(rng: &mut ChaCha8Rng) -> Vec<AnnotatedImage> {
    let n = rng.random_range(1..60);
    (0..n)
        .map(|i| {
            let boxes = rng.random_range(0..8);
            let annotations = (0..boxes)
                .map(|_| Annotation {
                    class_id: 0,
                    bbox: NormalizedCenterBox::new(
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.1..0.9),
                        rng.random_range(0.01..0.2),
                        rng.random_range(0.01..0.2),
                    )
                    .unwrap(),
                })
                .collect();
            let w = rng.random_range(100..2000);
            let h = rng.random_range(100..2000);
            AnnotatedImage::new(format!("r{i}"), w, h, annotations).unwrap()
        })
        .collect()
}

/// Box-count histogram of the reference bee corpus: 9,664 images and
/// 13,402 boxes.
pub const REFERENCE_HISTOGRAM: [usize; 12] = [1436, 6272, 617, 395, 375, 375, 115, 25, 25, 20, 8, 1];

/// In-memory frames and per-frame truth for a synthetic clip.
pub fn synthetic_clip(
    video: &hivewatch_core::synthetic::SyntheticVideo,
) -> (
    hivewatch_core::media::MemorySource,
    hivewatch_core::backend::FrameTruth,
) {
    let n = video.frame_count();
    let frames = (0..n).map(|i| video.render(i)).collect();
    let truth = (0..n).map(|i| (i, video.boxes(i))).collect();
    (
        hivewatch_core::media::MemorySource::new(video.fps, video.width, video.height, frames),
        truth,
    )
}

/// Counts backend invocations.
pub struct Counting<D> {
    pub inner: D,
    pub calls: usize,
}

impl<D: hivewatch_core::backend::Detector> hivewatch_core::backend::Detector for Counting<D> {
    fn descriptor(&self) -> &hivewatch_core::backend::BackendDescriptor {
        self.inner.descriptor()
    }

    fn detect_frame(
        &mut self,
        frame: &hivewatch_core::media::Frame,
    ) -> hivewatch_core::Result<(Vec<Detection>, hivewatch_core::backend::FrameTiming)> {
        self.calls += 1;
        self.inner.detect_frame(frame)
    }
}
