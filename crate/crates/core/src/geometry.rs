//! Axis-aligned boxes and the IoU family of overlap metrics.
//!
//! Coordinates are continuous; a box carries no unit, so callers must not
//! mix normalized and pixel frames. Edges are closed on both sides, which
//! means two boxes sharing only an edge have zero intersection area.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Corner-form box `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting non-finite coordinates and negative extents.
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidBox(format!(
                "non-finite coordinate in [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        if x_min > x_max || y_min > y_max {
            return Err(Error::InvalidBox(format!(
                "negative extent in [{x_min}, {y_min}, {x_max}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn from_array(c: [f64; 4]) -> Result<Self> {
        Self::new(c[0], c[1], c[2], c[3])
    }

    #[inline]
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    #[inline]
    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    #[inline]
    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    #[inline]
    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Scales about the origin. `s` must be positive to keep the box valid.
    pub fn scale(&self, s: f64) -> Self {
        Self {
            x_min: self.x_min * s,
            y_min: self.y_min * s,
            x_max: self.x_max * s,
            y_max: self.y_max * s,
        }
    }

    /// Clips the box to `[0, width] x [0, height]`.
    pub fn clamp_to(&self, width: f64, height: f64) -> Self {
        let cx = |v: f64| v.clamp(0.0, width);
        let cy = |v: f64| v.clamp(0.0, height);
        Self {
            x_min: cx(self.x_min),
            y_min: cy(self.y_min),
            x_max: cx(self.x_max),
            y_max: cy(self.y_max),
        }
    }

    /// Smallest box containing both inputs.
    pub fn enclosing(&self, other: &Self) -> Self {
        Self {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }
}

/// YOLO annotation convention: image-relative center and size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCenterBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl NormalizedCenterBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(cx) || !unit(cy) {
            return Err(Error::InvalidBox(format!("center ({cx}, {cy}) outside [0, 1]")));
        }
        if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
            return Err(Error::InvalidBox(format!("size ({w}, {h}) outside (0, 1]")));
        }
        Ok(Self { cx, cy, w, h })
    }

    /// Corner form in the same normalized frame, without clamping.
    pub fn to_normalized_corners(&self) -> BoundingBox {
        BoundingBox {
            x_min: self.cx - self.w / 2.0,
            y_min: self.cy - self.h / 2.0,
            x_max: self.cx + self.w / 2.0,
            y_max: self.cy + self.h / 2.0,
        }
    }
}

/// Converts a normalized center box into pixel corners clamped to the image.
pub fn to_corner_form(n: &NormalizedCenterBox, image_w: f64, image_h: f64) -> Result<BoundingBox> {
    check_dims(image_w, image_h)?;
    let half_w = n.w * image_w / 2.0;
    let half_h = n.h * image_h / 2.0;
    let (cx, cy) = (n.cx * image_w, n.cy * image_h);
    Ok(BoundingBox {
        x_min: cx - half_w,
        y_min: cy - half_h,
        x_max: cx + half_w,
        y_max: cy + half_h,
    }
    .clamp_to(image_w, image_h))
}

/// Inverse of [`to_corner_form`] for boxes with positive area inside the image.
pub fn to_center_form(b: &BoundingBox, image_w: f64, image_h: f64) -> Result<NormalizedCenterBox> {
    check_dims(image_w, image_h)?;
    let (cx, cy) = b.center();
    NormalizedCenterBox::new(
        cx / image_w,
        cy / image_h,
        b.width() / image_w,
        b.height() / image_h,
    )
}

fn check_dims(w: f64, h: f64) -> Result<()> {
    if w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "image dimensions must be positive, got {w}x{h}"
        )))
    }
}

/// Area of the overlap rectangle; zero when the boxes are disjoint or only touch.
pub fn intersection_area(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union. Two zero-area boxes give 0.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Generalized IoU: `iou - (area(C) - union) / area(C)` with `C` the enclosing box.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    let enclosing = a.enclosing(b).area();
    if enclosing <= 0.0 {
        return Err(Error::InvalidGeometry("enclosing box has zero area".to_string()));
    }
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    Ok(iou - (enclosing - union) / enclosing)
}

/// Distance IoU: `iou - d^2 / c^2`, with `d` the center distance and `c` the
/// diagonal of the enclosing box.
pub fn diou(a: &BoundingBox, b: &BoundingBox) -> Result<f64> {
    let c = a.enclosing(b);
    let diag_sq = c.width().powi(2) + c.height().powi(2);
    if c.area() <= 0.0 || diag_sq <= 0.0 {
        return Err(Error::InvalidGeometry("enclosing box has zero area".to_string()));
    }
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let dist_sq = (ax - bx).powi(2) + (ay - by).powi(2);
    Ok(iou(a, b) - dist_sq / diag_sq)
}
