use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::AnnotatedImage;
use crate::error::{Error, Result};
use crate::format::{fixed_half_up, thousands};

const AREA_BIN_WIDTH: f64 = 0.05;
const AREA_BINS: usize = 20;
const ASPECT_BIN_WIDTH: f64 = 0.25;
/// 16 bins over [0, 4) plus one overflow bin for ratios >= 4.
const ASPECT_BINS: usize = 17;

/// Fixed-width histogram; the last bin also collects values beyond the range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn new(bin_width: f64, bins: usize) -> Self {
        Self {
            bin_width,
            counts: vec![0; bins],
        }
    }

    fn add(&mut self, v: f64) {
        let bin = ((v / self.bin_width).floor().max(0.0) as usize).min(self.counts.len() - 1);
        self.counts[bin] += 1;
    }

    pub fn lower_edge(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_width
    }

    /// `value,count` CSV keyed by bin lower edge.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{}", fixed_half_up(self.lower_edge(i), 2), c);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_images: usize,
    pub total_boxes: usize,
    pub mean_boxes_per_image: f64,
    /// Population standard deviation.
    pub std_boxes_per_image: f64,
    pub max_boxes: usize,
    pub min_boxes: usize,
    pub zero_box_images: usize,
    /// Index `k` holds the number of images with exactly `k` boxes.
    pub boxes_per_image: Vec<usize>,
    /// Box area as a fraction of image area.
    pub area_histogram: Histogram,
    /// Pixel width over pixel height.
    pub aspect_histogram: Histogram,
}

/// Corpus statistics. Mean and standard deviation keep full precision; only
/// the rendered tables round.
pub fn compute_stats(corpus: &[AnnotatedImage]) -> Result<DatasetStats> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    let counts: Vec<usize> = corpus.iter().map(|img| img.annotations.len()).collect();
    let max_boxes = *counts.iter().max().expect("non-empty");
    let min_boxes = *counts.iter().min().expect("non-empty");
    let mut boxes_per_image = vec![0usize; max_boxes + 1];
    for &c in &counts {
        boxes_per_image[c] += 1;
    }

    let mut area_histogram = Histogram::new(AREA_BIN_WIDTH, AREA_BINS);
    let mut aspect_histogram = Histogram::new(ASPECT_BIN_WIDTH, ASPECT_BINS);
    for img in corpus {
        for a in &img.annotations {
            area_histogram.add(a.bbox.w * a.bbox.h);
            let pixel_w = a.bbox.w * img.width as f64;
            let pixel_h = a.bbox.h * img.height as f64;
            aspect_histogram.add(pixel_w / pixel_h);
        }
    }

    let n = corpus.len() as f64;
    let total_boxes: usize = counts.iter().sum();
    let mean = total_boxes as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;

    Ok(DatasetStats {
        total_images: corpus.len(),
        total_boxes,
        mean_boxes_per_image: mean,
        std_boxes_per_image: var.sqrt(),
        max_boxes,
        min_boxes,
        zero_box_images: boxes_per_image[0],
        boxes_per_image,
        area_histogram,
        aspect_histogram,
    })
}

impl DatasetStats {
    fn rows(&self, separators: bool) -> Vec<(&'static str, String)> {
        let int = |n: usize| if separators { thousands(n) } else { n.to_string() };
        vec![
            ("Total Number of Images", int(self.total_images)),
            ("Total Number of Bees", int(self.total_boxes)),
            (
                "Average Number of Bees per Image",
                fixed_half_up(self.mean_boxes_per_image, 2),
            ),
            (
                "Standard Deviation of Bees per Image",
                fixed_half_up(self.std_boxes_per_image, 2),
            ),
            ("Maximum Number of Bees in a Single Image", int(self.max_boxes)),
            ("Minimum Number of Bees in a Single Image", int(self.min_boxes)),
            ("Number of Images with No Bees", int(self.zero_box_images)),
        ]
    }

    /// Two-column `Metric` / `Value` table, values right-aligned.
    pub fn render_table(&self) -> String {
        let rows = self.rows(true);
        let name_w = rows.iter().map(|(m, _)| m.len()).max().unwrap_or(0);
        let val_w = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0).max(5);
        let mut out = format!("{:<name_w$}  {:>val_w$}\n", "Metric", "Value");
        for (m, v) in rows {
            let _ = writeln!(out, "{m:<name_w$}  {v:>val_w$}");
        }
        out
    }

    pub fn render_csv(&self) -> String {
        let mut out = String::from("Metric,Value\n");
        for (m, v) in self.rows(false) {
            let _ = writeln!(out, "{m},{v}");
        }
        out
    }

    pub fn boxes_per_image_csv(&self) -> String {
        let mut out = String::from("value,count\n");
        for (k, c) in self.boxes_per_image.iter().enumerate() {
            let _ = writeln!(out, "{k},{c}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Annotation;
    use crate::geometry::NormalizedCenterBox;

    fn image(n: usize) -> AnnotatedImage {
        let a = Annotation {
            class_id: 0,
            bbox: NormalizedCenterBox::new(0.5, 0.5, 0.1, 0.2).unwrap(),
        };
        AnnotatedImage::new(format!("i{n}"), 416, 416, vec![a; n]).unwrap()
    }

    #[test]
    fn single_empty_image() {
        let s = compute_stats(&[image(0)]).unwrap();
        assert_eq!(s.mean_boxes_per_image, 0.0);
        assert_eq!(s.std_boxes_per_image, 0.0);
        assert_eq!(s.zero_box_images, 1);
        assert_eq!(s.max_boxes, 0);
    }

    #[test]
    fn two_images_mean() {
        let s = compute_stats(&[image(1), image(2)]).unwrap();
        assert_eq!(s.mean_boxes_per_image, 1.5);
        assert_eq!(s.std_boxes_per_image, 0.5);
        assert!(s
            .render_table()
            .contains("Average Number of Bees per Image           1.50\n"));
    }

    #[test]
    fn empty_corpus_is_error() {
        assert!(compute_stats(&[]).is_err());
    }

    #[test]
    fn histograms() {
        let s = compute_stats(&[image(3)]).unwrap();
        // area 0.02 -> first bin; aspect 0.5 -> bin 2
        assert_eq!(s.area_histogram.counts[0], 3);
        assert_eq!(s.aspect_histogram.counts[2], 3);
        assert!(s
            .aspect_histogram
            .to_csv()
            .starts_with("value,count\n0.00,0\n0.25,0\n0.50,3\n"));
        assert_eq!(s.boxes_per_image_csv(), "value,count\n0,0\n1,0\n2,0\n3,1\n");
    }

    #[test]
    fn table_layout() {
        let s = compute_stats(&[image(1), image(0)]).unwrap();
        let expected = "\
Metric                                    Value
Total Number of Images                        2
Total Number of Bees                          1
Average Number of Bees per Image           0.50
Standard Deviation of Bees per Image       0.50
Maximum Number of Bees in a Single Image      1
Minimum Number of Bees in a Single Image      0
Number of Images with No Bees                 1
";
        assert_eq!(s.render_table(), expected);
        assert!(s
            .render_csv()
            .starts_with("Metric,Value\nTotal Number of Images,2\n"));
    }
}
