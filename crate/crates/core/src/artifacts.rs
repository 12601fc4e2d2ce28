//! The artifact set produced for one video: `report.csv`, `summary.json`
//! and a gallery of annotated keyframes under `frames/`.
//!
//! The CLI and the HTTP service both go through [`run_detection`], so the
//! bytes they write for the same input and backend are identical.

use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::backend::Detector;
use crate::error::{Error, Result};
use crate::evaluation::Detection;
use crate::media::VideoSource;
use crate::pipeline::{
    per_second_series, process_video, DetectionEvent, KeyframePolicy, PipelineObserver, PipelineOutput,
};
use crate::report::{
    build_report, series_pairs, summarize, summary_json, write_csv, ReportRow, ReportSummary,
};

pub const REPORT_CSV: &str = "report.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const FRAMES_DIR: &str = "frames";
/// Gallery images kept per video.
pub const GALLERY_LIMIT: usize = 1000;

const BOX_COLOUR: Rgb<u8> = Rgb([255, 200, 0]);

/// Path of gallery image `n` inside an artifact directory.
pub fn gallery_path(dir: &Path, n: usize) -> PathBuf {
    dir.join(FRAMES_DIR).join(format!("{n:06}.png"))
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::from(e).in_file(&tmp))?;
    fs::rename(&tmp, path).map_err(|e| Error::from(e).in_file(path))?;
    Ok(())
}

/// Outlines each detection, two pixels wide.
pub fn draw_detections(image: &mut RgbImage, detections: &[Detection]) {
    let (w, h) = (image.width() as i64, image.height() as i64);
    if w == 0 || h == 0 {
        return;
    }
    for d in detections {
        let [x0, y0, x1, y1] = d.bbox.to_array().map(|v| v.round() as i64);
        let (x0, x1) = (x0.clamp(0, w - 1), x1.clamp(0, w - 1));
        let (y0, y1) = (y0.clamp(0, h - 1), y1.clamp(0, h - 1));
        for t in 0..2 {
            for x in x0..=x1 {
                for y in [y0 + t, y1 - t] {
                    if (0..h).contains(&y) {
                        image.put_pixel(x as u32, y as u32, BOX_COLOUR);
                    }
                }
            }
            for y in y0..=y1 {
                for x in [x0 + t, x1 - t] {
                    if (0..w).contains(&x) {
                        image.put_pixel(x as u32, y as u32, BOX_COLOUR);
                    }
                }
            }
        }
    }
}

/// Keeps the first keyframe with detections in each second.
struct Gallery<'a> {
    dir: &'a Path,
    written: usize,
    last_second: Option<u64>,
    progress: &'a mut dyn FnMut(f64) -> bool,
    cancelled: bool,
}

impl PipelineObserver for Gallery<'_> {
    fn progress(&mut self, fraction: f64) {
        if !(self.progress)(fraction) {
            self.cancelled = true;
        }
    }

    fn event(&mut self, event: &DetectionEvent, image: &RgbImage) -> Result<()> {
        if self.cancelled {
            return Err(Error::Cancelled);
        }
        if event.detections.is_empty()
            || self.written >= GALLERY_LIMIT
            || self.last_second == Some(event.video_time_s)
        {
            return Ok(());
        }
        let mut annotated = image.clone();
        draw_detections(&mut annotated, &event.detections);
        let path = gallery_path(self.dir, self.written);
        annotated.save(&path).map_err(|e| Error::from(e).in_file(&path))?;
        self.written += 1;
        self.last_second = Some(event.video_time_s);
        Ok(())
    }
}

#[derive(Debug)]
pub struct DetectionRun {
    pub output: PipelineOutput,
    pub rows: Vec<ReportRow>,
    pub summary: ReportSummary,
    /// Number of gallery images written.
    pub gallery: usize,
}

/// Processes `source` and writes the artifact set into `out_dir`, which is
/// created if needed. Artifacts are written even when the run is
/// interrupted; check `output.interruption`.
///
/// `progress` receives the completed fraction of the keyframe plan;
/// returning `false` stops the run with [`Error::Cancelled`] and writes
/// no report.
pub fn run_detection(
    source: Box<dyn VideoSource>,
    backend: &mut dyn Detector,
    policy: &KeyframePolicy,
    out_dir: &Path,
    progress: &mut dyn FnMut(f64) -> bool,
) -> Result<DetectionRun> {
    let frames = out_dir.join(FRAMES_DIR);
    fs::create_dir_all(&frames).map_err(|e| Error::from(e).in_file(&frames))?;
    let mut gallery = Gallery {
        dir: out_dir,
        written: 0,
        last_second: None,
        progress,
        cancelled: false,
    };
    let output = process_video(source, backend, policy, &mut gallery)?;
    let written = gallery.written;

    let rows = build_report(&series_pairs(&per_second_series(&output.events)))?;
    let summary = summarize(&rows);
    write_atomic(&out_dir.join(REPORT_CSV), &write_csv(&rows)?)?;
    write_atomic(&out_dir.join(SUMMARY_JSON), &summary_json(&summary)?)?;
    Ok(DetectionRun {
        output,
        rows,
        summary,
        gallery: written,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    #[test]
    fn draws_outline_only() {
        let mut img = RgbImage::new(20, 20);
        let d = Detection::new(BoundingBox::new(5., 5., 15., 15.).unwrap(), 1.0, 0, "x").unwrap();
        draw_detections(&mut img, &[d]);
        assert_eq!(*img.get_pixel(5, 10), BOX_COLOUR);
        assert_eq!(*img.get_pixel(14, 10), BOX_COLOUR);
        assert_eq!(*img.get_pixel(10, 10), Rgb([0, 0, 0]));
        assert_eq!(*img.get_pixel(2, 2), Rgb([0, 0, 0]));
    }

    #[test]
    fn edge_boxes_do_not_panic() {
        let mut img = RgbImage::new(4, 4);
        let d = Detection::new(BoundingBox::new(0., 0., 4., 4.).unwrap(), 1.0, 0, "x").unwrap();
        draw_detections(&mut img, &[d]);
    }
}
