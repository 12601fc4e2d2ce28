//! Evaluation, dataset tooling, keyframe video detection and timestamped
//! reporting for camera-based pollinator monitoring.
//!
//! Boxes use pixel corner form ([`geometry::BoundingBox`]) internally and
//! normalized centre form ([`geometry::NormalizedCenterBox`]) in annotation
//! files. Detectors implement [`backend::Detector`]; videos are read through
//! [`media::VideoSource`].

pub mod artifacts;
pub mod backend;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod format;
pub mod geometry;
pub mod media;
pub mod nms;
pub mod pipeline;
pub mod report;
pub mod synthetic;
pub mod timing;

pub use error::{Error, Result, Stage};
