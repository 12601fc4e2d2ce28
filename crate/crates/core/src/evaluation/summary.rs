use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ap::{per_class_ap, COCO_IOU_THRESHOLDS};
use super::matching::{match_detections, precision, recall, MatchResult};
use super::{ClassId, Detection, GroundTruthBox, ImageId};
use crate::error::{Error, Result};
use crate::format::fixed_half_up;
use crate::timing::FrameTiming;

/// Operating point for the precision/recall columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Detections below this confidence are ignored for precision and recall.
    /// mAP always uses every detection.
    pub confidence_threshold: f64,
    pub iou_threshold: f64,
    /// Additional single-threshold mAP columns.
    pub extra_thresholds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            confidence_threshold: 0.25,
            iou_threshold: 0.5,
            extra_thresholds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAp {
    pub class_id: ClassId,
    pub ap_50: Option<f64>,
    pub ap_50_95: Option<f64>,
}

/// One evaluation row. Rates are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub images: usize,
    pub ground_truth_boxes: usize,
    pub detections: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub precision_undefined: bool,
    pub recall: f64,
    pub recall_undefined: bool,
    pub map_50: f64,
    pub map_50_95: f64,
    /// `(threshold, mAP %)` for each configured extra threshold.
    pub extra_map: Vec<(f64, f64)>,
    pub per_class: Vec<ClassAp>,
    pub timing: Option<FrameTiming>,
    pub config: EvalConfig,
}

/// Evaluates per-image predictions against per-image ground truth.
pub fn evaluate_dataset(
    predictions: &BTreeMap<ImageId, Vec<Detection>>,
    truth: &BTreeMap<ImageId, Vec<GroundTruthBox>>,
    timing: Option<FrameTiming>,
    config: &EvalConfig,
) -> Result<EvalSummary> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("empty ground-truth set".into()));
    }
    if let Some(orphan) = predictions.keys().find(|id| !truth.contains_key(*id)) {
        return Err(Error::InvalidArgument(format!(
            "predictions for image {orphan} have no ground truth"
        )));
    }
    if let Some(t) = &timing {
        if !t.is_additive() {
            return Err(Error::InvalidArgument(format!(
                "timing total {} ms is not the sum of its stages",
                t.total_ms
            )));
        }
    }

    let mut counts = MatchResult::default();
    for (image, gts) in truth {
        let dets = predictions.get(image).map(Vec::as_slice).unwrap_or(&[]);
        let mut groups: BTreeMap<ClassId, (Vec<Detection>, Vec<GroundTruthBox>)> = BTreeMap::new();
        for d in dets
            .iter()
            .filter(|d| d.confidence >= config.confidence_threshold)
        {
            groups.entry(d.class_id).or_default().0.push(d.clone());
        }
        for g in gts {
            groups.entry(g.class_id).or_default().1.push(g.clone());
        }
        for (d, g) in groups.values() {
            counts.merge(&match_detections(d, g, config.iou_threshold)?);
        }
    }

    let all_dets: Vec<Detection> = predictions.values().flatten().cloned().collect();
    let all_gts: Vec<GroundTruthBox> = truth.values().flatten().cloned().collect();

    let per_threshold: Vec<BTreeMap<ClassId, Option<f64>>> = COCO_IOU_THRESHOLDS
        .iter()
        .map(|&t| per_class_ap(&all_dets, &all_gts, t))
        .collect::<Result<_>>()?;
    let classes: Vec<ClassId> = per_threshold[0].keys().copied().collect();
    let per_class: Vec<ClassAp> = classes
        .iter()
        .map(|c| {
            let ap_50 = per_threshold[0][c];
            let ap_50_95 = ap_50.map(|_| {
                per_threshold.iter().map(|m| m[c].unwrap_or(0.0)).sum::<f64>()
                    / COCO_IOU_THRESHOLDS.len() as f64
            });
            ClassAp {
                class_id: *c,
                ap_50,
                ap_50_95,
            }
        })
        .collect();
    let mean = |f: fn(&ClassAp) -> Option<f64>| -> Result<f64> {
        let vals: Vec<f64> = per_class.iter().filter_map(f).collect();
        if vals.is_empty() {
            Err(Error::Undefined("no class has ground truth".into()))
        } else {
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    };
    let map_50 = mean(|c| c.ap_50)?;
    let map_50_95 = mean(|c| c.ap_50_95)?;

    let extra_map = config
        .extra_thresholds
        .iter()
        .map(|&t| Ok((t, 100.0 * super::map_at(&all_dets, &all_gts, t)?)))
        .collect::<Result<_>>()?;

    let p = precision(&counts);
    let r = recall(&counts);
    Ok(EvalSummary {
        images: truth.len(),
        ground_truth_boxes: all_gts.len(),
        detections: all_dets.len(),
        true_positives: counts.true_positives,
        false_positives: counts.false_positives,
        false_negatives: counts.false_negatives,
        precision: 100.0 * p.value,
        precision_undefined: p.undefined,
        recall: 100.0 * r.value,
        recall_undefined: r.undefined,
        map_50: 100.0 * map_50,
        map_50_95: 100.0 * map_50_95,
        extra_map,
        per_class,
        timing,
        config: config.clone(),
    })
}

fn threshold_label(t: f64) -> String {
    let s = t.to_string();
    format!("mAP@{}", s.strip_prefix('0').unwrap_or(&s))
}

impl EvalSummary {
    fn columns(&self, model: &str) -> (Vec<String>, Vec<String>) {
        let mut header: Vec<String> = ["Model", "Precision", "Recall", "mAP@.5", "mAP@.5:.95"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut row = vec![
            model.to_string(),
            fixed_half_up(self.precision, 1),
            fixed_half_up(self.recall, 1),
            fixed_half_up(self.map_50, 1),
            fixed_half_up(self.map_50_95, 1),
        ];
        for (t, m) in &self.extra_map {
            header.push(threshold_label(*t));
            row.push(fixed_half_up(*m, 1));
        }
        header.push("Inference (ms)".into());
        row.push(
            self.timing
                .map(|t| fixed_half_up(t.total_ms, 1))
                .unwrap_or_else(|| "-".into()),
        );
        (header, row)
    }

    fn notes(&self) -> Vec<String> {
        let mut notes = vec![format!(
            "operating point: confidence >= {}, IoU >= {}",
            self.config.confidence_threshold, self.config.iou_threshold
        )];
        if self.precision_undefined {
            notes.push("precision undefined: no detections at the operating point".into());
        }
        if self.recall_undefined {
            notes.push("recall undefined: no ground-truth boxes".into());
        }
        notes
    }

    /// Fixed-width table: the model column is left-aligned, numbers are
    /// right-aligned, columns are separated by two spaces, and notes follow
    /// as `#` lines.
    pub fn render_table(&self, model: &str) -> String {
        let (header, row) = self.columns(model);
        let widths: Vec<usize> = header
            .iter()
            .zip(&row)
            .map(|(h, v)| h.len().max(v.len()))
            .collect();
        let line = |cells: &[String]| {
            let mut out = String::new();
            for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                if i == 0 {
                    let _ = write!(out, "{cell:<w$}");
                } else {
                    let _ = write!(out, "  {cell:>w$}");
                }
            }
            out.push('\n');
            out
        };
        let mut out = line(&header);
        out.push_str(&line(&row));
        for note in self.notes() {
            let _ = writeln!(out, "# {note}");
        }
        if self.per_class.len() > 1 {
            for c in &self.per_class {
                let fmt = |v: Option<f64>| v.map_or("-".into(), |v| fixed_half_up(100.0 * v, 1));
                let _ = writeln!(
                    out,
                    "# class {}: AP@.5 {} AP@.5:.95 {}",
                    c.class_id,
                    fmt(c.ap_50),
                    fmt(c.ap_50_95)
                );
            }
        }
        out
    }

    /// CSV mirror of [`render_table`](Self::render_table) without the notes.
    pub fn render_csv(&self, model: &str) -> Result<String> {
        let (header, row) = self.columns(model);
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&header)?;
        w.write_record(&row)?;
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
