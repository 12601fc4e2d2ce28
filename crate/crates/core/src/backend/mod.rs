//! Pluggable per-frame detectors.
//!
//! A backend turns one decoded frame into detections in original-frame
//! pixel coordinates plus a [`FrameTiming`] breakdown. Stage boundaries:
//! pre-process covers letterbox and tensor packing, inference the forward
//! pass, NMS candidate decoding and suppression.

#[cfg(feature = "onnx")]
mod model;
mod replay;
mod spec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evaluation::Detection;
use crate::media::Frame;
use crate::nms::NmsConfig;
pub use crate::timing::{aggregate_timings, FrameTiming};

#[cfg(feature = "onnx")]
pub use model::{ModelBackend, ModelDescriptor, OutputLayout};
pub use replay::{
    load_frame_truth, ClockMode, ConfidenceModel, FrameTruth, ReplayBackend, ReplayNoise, StageLatency,
};
pub use spec::{build_backend, BackendSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    /// Model path, or `"replay"`.
    pub model: String,
    pub input_size: u32,
    /// `None` when the backend does not run suppression.
    pub nms: Option<NmsConfig>,
}

/// One frame at a time; instances are not shared between threads.
pub trait Detector: Send {
    fn descriptor(&self) -> &BackendDescriptor;

    fn detect_frame(&mut self, frame: &Frame) -> Result<(Vec<Detection>, FrameTiming)>;
}

impl<D: Detector + ?Sized> Detector for Box<D> {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }

    fn detect_frame(&mut self, frame: &Frame) -> Result<(Vec<Detection>, FrameTiming)> {
        (**self).detect_frame(frame)
    }
}

pub(crate) fn frame_image_id(index: u64) -> crate::evaluation::ImageId {
    crate::evaluation::ImageId::new(index.to_string())
}
