//! Per-image text files: ground truth uses the annotation sidecar format,
//! predictions append a confidence column (`class cx cy w h confidence`).
//! Coordinates are normalized; boxes are evaluated in the unit frame.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Detection, GroundTruthBox, ImageId};
use crate::dataset::{fields, parse_annotation_file, parse_box, sidecar_files};
use crate::error::{Error, Result};
use crate::geometry::{to_center_form, to_corner_form};

/// Parses one prediction file for `image_id`.
pub fn parse_prediction_file(text: &str, image_id: &ImageId) -> Result<Vec<Detection>> {
    fields(text)
        .map(|(line, f)| {
            if f.len() != 6 {
                return Err(Error::Annotation {
                    line,
                    message: format!("expected 6 fields, found {}", f.len()),
                });
            }
            let a = parse_box(line, &f[..5])?;
            let confidence = f[5]
                .parse::<f64>()
                .ok()
                .filter(|c| (0.0..=1.0).contains(c))
                .ok_or_else(|| Error::Annotation {
                    line,
                    message: format!("invalid confidence {:?}", f[5]),
                })?;
            let bbox = to_corner_form(&a.bbox, 1.0, 1.0)?;
            Detection::new(bbox, confidence, a.class_id, image_id.clone())
        })
        .collect()
}

/// Formats detections given in the unit frame as prediction lines.
pub fn format_predictions(dets: &[Detection]) -> Result<String> {
    let mut out = String::new();
    for d in dets {
        let c = to_center_form(&d.bbox, 1.0, 1.0)?;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            d.class_id, c.cx, c.cy, c.w, c.h, d.confidence
        );
    }
    Ok(out)
}

/// Ground truth from annotation text, in the unit frame.
pub fn parse_truth_file(text: &str, image_id: &ImageId) -> Result<Vec<GroundTruthBox>> {
    parse_annotation_file(text)?
        .into_iter()
        .map(|a| {
            Ok(GroundTruthBox::new(
                to_corner_form(&a.bbox, 1.0, 1.0)?,
                a.class_id,
                image_id.clone(),
            ))
        })
        .collect()
}

fn stem_id(path: &Path) -> Result<ImageId> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(ImageId::new)
        .ok_or_else(|| Error::InvalidArgument(format!("bad file name {}", path.display())))
}

fn load_dir<T>(
    dir: &Path,
    parse: impl Fn(&str, &ImageId) -> Result<Vec<T>>,
) -> Result<BTreeMap<ImageId, (PathBuf, Vec<T>)>> {
    let mut out = BTreeMap::new();
    for path in sidecar_files(dir)? {
        let id = stem_id(&path)?;
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let items = parse(&text, &id).map_err(|e| e.in_file(&path))?;
        out.insert(id, (path, items));
    }
    Ok(out)
}

/// Ground truth keyed by file stem. Uses `<dir>/labels` when present.
pub fn load_truth_dir(dir: &Path) -> Result<BTreeMap<ImageId, Vec<GroundTruthBox>>> {
    Ok(load_dir(&crate::dataset::labels_dir(dir), parse_truth_file)?
        .into_iter()
        .map(|(id, (_, v))| (id, v))
        .collect())
}

/// Predictions keyed by file stem, with the source path of each file.
pub fn load_prediction_dir(dir: &Path) -> Result<BTreeMap<ImageId, (PathBuf, Vec<Detection>)>> {
    load_dir(dir, parse_prediction_file)
}
