use image::{imageops, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Square network input side, in pixels.
pub const MODEL_INPUT_SIZE: u32 = 416;

/// Gray fill for the padded border (114/255 per channel).
pub const LETTERBOX_PAD_VALUE: u8 = 114;

/// Aspect-preserving resize of a `source_w x source_h` image into a
/// `target x target` square, centered, with the odd padding pixel on the
/// bottom/right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Letterbox {
    pub source_w: u32,
    pub source_h: u32,
    pub target: u32,
    pub scale: f64,
    pub content_w: u32,
    pub content_h: u32,
    pub pad_left: u32,
    pub pad_top: u32,
    pub pad_right: u32,
    pub pad_bottom: u32,
    pub pad_value: u8,
}

pub fn letterbox(width: u32, height: u32, target: u32) -> Result<Letterbox> {
    if width == 0 || height == 0 || target == 0 {
        return Err(Error::InvalidArgument(format!(
            "letterbox needs positive dimensions, got {width}x{height} -> {target}"
        )));
    }
    let scale = target as f64 / width.max(height) as f64;
    let content_w = ((width as f64 * scale).round() as u32).clamp(1, target);
    let content_h = ((height as f64 * scale).round() as u32).clamp(1, target);
    let (pad_x, pad_y) = (target - content_w, target - content_h);
    Ok(Letterbox {
        source_w: width,
        source_h: height,
        target,
        scale,
        content_w,
        content_h,
        pad_left: pad_x / 2,
        pad_top: pad_y / 2,
        pad_right: pad_x - pad_x / 2,
        pad_bottom: pad_y - pad_y / 2,
        pad_value: LETTERBOX_PAD_VALUE,
    })
}

impl Letterbox {
    pub fn is_identity(&self) -> bool {
        self.scale == 1.0 && self.pad_left == 0 && self.pad_top == 0
    }

    /// Maps a source-frame box into the letterboxed frame.
    pub fn forward(&self, b: &BoundingBox) -> BoundingBox {
        b.scale(self.scale)
            .translate(self.pad_left as f64, self.pad_top as f64)
    }

    /// Maps a letterboxed-frame box back into the source frame (unclamped).
    pub fn inverse(&self, b: &BoundingBox) -> BoundingBox {
        b.translate(-(self.pad_left as f64), -(self.pad_top as f64))
            .scale(1.0 / self.scale)
    }

    /// Resizes and pads `img`; `img` must match the source dimensions.
    pub fn apply(&self, img: &RgbImage) -> Result<RgbImage> {
        if img.dimensions() != (self.source_w, self.source_h) {
            return Err(Error::InvalidArgument(format!(
                "image is {:?}, letterbox expects {}x{}",
                img.dimensions(),
                self.source_w,
                self.source_h
            )));
        }
        if self.is_identity() {
            return Ok(img.clone());
        }
        let resized = imageops::resize(
            img,
            self.content_w,
            self.content_h,
            imageops::FilterType::Triangle,
        );
        let mut canvas = RgbImage::from_pixel(self.target, self.target, Rgb([self.pad_value; 3]));
        imageops::replace(&mut canvas, &resized, self.pad_left as i64, self.pad_top as i64);
        Ok(canvas)
    }
}
