//! Synthetic annotated videos for demos and end-to-end tests.
//!
//! Bee count is constant within each second, so the per-second ground
//! truth occupancy is well defined regardless of keyframe stride.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{serialize_annotations, Annotation};
use crate::error::{Error, Result};
use crate::geometry::{to_corner_form, NormalizedCenterBox};
use crate::media::{FrameRate, Y4mWriter};

/// At most this many bees share a frame.
pub const MAX_BEES: u32 = 3;

const BEE_W: f64 = 0.16;
const BEE_H: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticVideo {
    pub width: u32,
    pub height: u32,
    pub fps: FrameRate,
    /// Bees visible during each second.
    pub occupancy: Vec<u32>,
    pub seed: u64,
}

impl SyntheticVideo {
    /// Random occupancy in `0..=MAX_BEES`, changing every few seconds.
    pub fn random(seconds: u32, fps: FrameRate, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut occupancy = Vec::with_capacity(seconds as usize);
        let mut current = 0;
        for _ in 0..seconds {
            if rng.random_bool(0.3) {
                current = rng.random_range(0..=MAX_BEES);
            }
            occupancy.push(current);
        }
        Self {
            width: 96,
            height: 64,
            fps,
            occupancy,
            seed,
        }
    }

    pub fn with_size(mut self, width: u32, height: u32) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn frame_count(&self) -> u64 {
        self.occupancy.len() as u64 * self.fps.num as u64 / self.fps.den as u64
    }

    /// Truth boxes for `frame_index`; bees stay put within a second.
    pub fn boxes(&self, frame_index: u64) -> Vec<Annotation> {
        let second = self.fps.second_of(frame_index);
        let n = self.occupancy.get(second as usize).copied().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(second);
        (0..n.min(MAX_BEES))
            .map(|j| {
                let lane = (j as f64 + 0.5) / MAX_BEES as f64;
                let cx = lane + rng.random_range(-0.05..=0.05);
                let cy = rng.random_range(0.25..=0.75);
                Annotation {
                    class_id: 0,
                    bbox: NormalizedCenterBox::new(cx, cy, BEE_W, BEE_H)
                        .expect("synthetic boxes lie inside the unit square"),
                }
            })
            .collect()
    }

    pub fn render(&self, frame_index: u64) -> Result<RgbImage> {
        let (w, h) = (self.width, self.height);
        let mut img = RgbImage::from_fn(w, h, |x, y| {
            let g = 110 + (60 * y / h.max(1)) as u8;
            Rgb([70 + (40 * x / w.max(1)) as u8, g, 60])
        });
        for a in self.boxes(frame_index) {
            let b = to_corner_form(&a.bbox, w as f64, h as f64)?;
            let (cx, cy) = b.center();
            let (rx, ry) = (b.width() / 2.0, b.height() / 2.0);
            let x_range = b.x_min().floor() as u32..(b.x_max().ceil() as u32).min(w);
            for y in b.y_min().floor() as u32..(b.y_max().ceil() as u32).min(h) {
                for x in x_range.clone() {
                    let dx = (x as f64 + 0.5 - cx) / rx;
                    let dy = (y as f64 + 0.5 - cy) / ry;
                    if dx * dx + dy * dy <= 1.0 {
                        let stripe = ((x as f64 - b.x_min()) / 3.0) as u32 % 2 == 0;
                        let c = if stripe { [30, 20, 10] } else { [230, 180, 30] };
                        img.put_pixel(x, y, Rgb(c));
                    }
                }
            }
        }
        Ok(img)
    }

    /// Ground truth `(second, bees)` pairs.
    pub fn occupancy_series(&self) -> Vec<(u64, u64)> {
        self.occupancy
            .iter()
            .enumerate()
            .map(|(s, &n)| (s as u64, n as u64))
            .collect()
    }

    /// Writes the video as `.y4m` and one `<frame_index>.txt` per frame.
    pub fn write(&self, video: &Path, truth_dir: &Path) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument(
                "synthetic video needs a positive size".into(),
            ));
        }
        fs::create_dir_all(truth_dir).map_err(|e| Error::from(e).in_file(truth_dir))?;
        let out = File::create(video).map_err(|e| Error::from(e).in_file(video))?;
        let mut writer = Y4mWriter::new(BufWriter::new(out), self.width, self.height, self.fps)?;
        for i in 0..self.frame_count() {
            writer.write_frame(&self.render(i)?)?;
            let path = truth_dir.join(format!("{i:06}.txt"));
            fs::write(&path, serialize_annotations(&self.boxes(i)))
                .map_err(|e| Error::from(e).in_file(&path))?;
        }
        writer.finish()?;
        Ok(())
    }
}
