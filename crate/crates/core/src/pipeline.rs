//! Keyframe sampling, per-frame detection and per-second aggregation.

use std::sync::mpsc;
use std::thread;
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::backend::Detector;
use crate::error::{Error, Result};
use crate::evaluation::Detection;
use crate::media::{Frame, VideoMeta, VideoSource};
use crate::timing::FrameTiming;

/// Fixed-stride sampling; the default stride of 2 samples at half the
/// native frame rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyframePolicy {
    pub stride: u32,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self { stride: 2 }
    }
}

impl KeyframePolicy {
    pub fn new(stride: u32) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument(
                "keyframe stride must be at least 1".into(),
            ));
        }
        Ok(Self { stride })
    }

    /// Keyframes per second.
    pub fn sampling_rate(&self, meta: &VideoMeta) -> f64 {
        meta.fps.fps() / self.stride as f64
    }

    pub fn is_keyframe(&self, frame_index: u64) -> bool {
        frame_index % self.stride as u64 == 0
    }
}

/// `0, stride, 2*stride, ...` below the frame count.
pub fn plan_keyframes(meta: &VideoMeta, policy: &KeyframePolicy) -> Vec<u64> {
    (0..meta.frame_count)
        .step_by(policy.stride.max(1) as usize)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub frame_index: u64,
    /// Whole seconds since the start of the video.
    pub video_time_s: u64,
    pub detections: Vec<Detection>,
    pub timing: FrameTiming,
}

/// Why processing stopped before the end of the plan.
#[derive(Debug)]
pub enum Interruption {
    /// The stream could not be decoded at `frame_index`; earlier events are valid.
    Decode { frame_index: u64, message: String },
    /// The detector failed on `frame_index`.
    Backend { frame_index: u64, error: Error },
}

impl std::fmt::Display for Interruption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Decode { frame_index, message } => {
                write!(f, "truncated at frame {frame_index}: {message}")
            }
            Self::Backend { frame_index, error } => {
                write!(f, "backend failed at frame {frame_index}: {error}")
            }
        }
    }
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub meta: VideoMeta,
    pub planned: usize,
    /// One per processed keyframe, in frame order.
    pub events: Vec<DetectionEvent>,
    pub interruption: Option<Interruption>,
    pub elapsed_ms: f64,
}

impl PipelineOutput {
    pub fn is_complete(&self) -> bool {
        self.interruption.is_none()
    }
}

/// Callbacks invoked on the calling thread, in frame order.
pub trait PipelineObserver {
    /// Fraction of the plan completed, in `[0, 1]`.
    fn progress(&mut self, _fraction: f64) {}

    /// Called once per event with the decoded keyframe.
    fn event(&mut self, _event: &DetectionEvent, _image: &RgbImage) -> Result<()> {
        Ok(())
    }
}

impl PipelineObserver for () {}

/// Frames decoded ahead of detection.
pub const DEFAULT_IN_FLIGHT: usize = 4;

/// Decodes `source` on a helper thread and runs `backend` on every planned
/// keyframe. Decode and detection overlap by at most `DEFAULT_IN_FLIGHT`
/// frames. Observer errors abort the run.
pub fn process_video(
    source: Box<dyn VideoSource>,
    backend: &mut dyn Detector,
    policy: &KeyframePolicy,
    observer: &mut dyn PipelineObserver,
) -> Result<PipelineOutput> {
    let start = Instant::now();
    let meta = *source.meta();
    let plan = plan_keyframes(&meta, policy);
    let planned = plan.len();
    let mut events = Vec::with_capacity(planned);
    let mut interruption = None;

    thread::scope(|scope| -> Result<()> {
        let (tx, rx) = mpsc::sync_channel::<std::result::Result<Frame, (u64, String)>>(DEFAULT_IN_FLIGHT);
        let stride = policy.stride.max(1) as u64;
        let frame_count = meta.frame_count;
        scope.spawn(move || {
            let mut source = source;
            for index in 0..frame_count {
                let step = if index % stride == 0 {
                    source.next_frame().map(|f| f.map(Some))
                } else {
                    source.skip_frame().map(|more| more.then_some(None))
                };
                let msg = match step {
                    Ok(Some(Some(frame))) => Ok(frame),
                    Ok(Some(None)) => continue,
                    Ok(None) => Err((index, "stream ended before the declared frame count".into())),
                    Err(Error::Decode { frame, message }) => Err((frame, message)),
                    Err(e) => Err((index, e.to_string())),
                };
                let stop = msg.is_err();
                if tx.send(msg).is_err() || stop {
                    return;
                }
            }
        });

        for msg in rx {
            let frame = match msg {
                Ok(frame) => frame,
                Err((frame_index, message)) => {
                    interruption = Some(Interruption::Decode { frame_index, message });
                    break;
                }
            };
            let (detections, timing) = match backend.detect_frame(&frame) {
                Ok(out) => out,
                Err(error) => {
                    interruption = Some(Interruption::Backend {
                        frame_index: frame.index,
                        error,
                    });
                    break;
                }
            };
            let event = DetectionEvent {
                frame_index: frame.index,
                video_time_s: meta.fps.second_of(frame.index),
                detections,
                timing,
            };
            observer.event(&event, &frame.image)?;
            events.push(event);
            observer.progress(events.len() as f64 / planned as f64);
        }
        // dropping `rx` unblocks the decoder if we stopped early
        Ok(())
    })?;

    Ok(PipelineOutput {
        meta,
        planned,
        events,
        interruption,
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondSample {
    pub video_time_s: u64,
    /// Maximum detection count over the second's keyframes.
    pub detected: usize,
    /// True when no keyframe fell in this second.
    pub no_sample: bool,
}

/// One sample per second from 0 through the last event's second.
pub fn per_second_series(events: &[DetectionEvent]) -> Vec<SecondSample> {
    let Some(last) = events.last() else {
        return Vec::new();
    };
    let mut series: Vec<SecondSample> = (0..=last.video_time_s)
        .map(|s| SecondSample {
            video_time_s: s,
            detected: 0,
            no_sample: true,
        })
        .collect();
    for e in events {
        let slot = &mut series[e.video_time_s as usize];
        slot.detected = slot.detected.max(e.detections.len());
        slot.no_sample = false;
    }
    series
}
