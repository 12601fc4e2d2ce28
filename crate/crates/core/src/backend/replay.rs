use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{frame_image_id, BackendDescriptor, Detector, FrameTiming};
use crate::dataset::{parse_annotation_file, sidecar_files, Annotation, MODEL_INPUT_SIZE};
use crate::error::{Error, Result};
use crate::evaluation::Detection;
use crate::geometry::{to_corner_form, BoundingBox};
use crate::media::Frame;

/// Ground truth per frame index.
pub type FrameTruth = BTreeMap<u64, Vec<Annotation>>;

/// Loads `<frame_index>.txt` sidecars (zero padding allowed) from `dir`.
pub fn load_frame_truth(dir: &Path) -> Result<FrameTruth> {
    let mut truth = FrameTruth::new();
    for path in sidecar_files(dir)? {
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "truth file {} is not named by frame index",
                    path.display()
                ))
            })?;
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let boxes = parse_annotation_file(&text).map_err(|e| e.in_file(&path))?;
        truth.insert(index, boxes);
    }
    Ok(truth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ConfidenceModel {
    Fixed(f64),
    Uniform { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayNoise {
    /// Probability of dropping each truth box.
    pub drop_rate: f64,
    /// Maximum per-coordinate offset, in pixels.
    pub jitter_px: f64,
    pub confidence: ConfidenceModel,
}

impl Default for ReplayNoise {
    fn default() -> Self {
        Self {
            drop_rate: 0.0,
            jitter_px: 0.0,
            confidence: ConfidenceModel::Fixed(1.0),
        }
    }
}

impl ReplayNoise {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        let conf_ok = match self.confidence {
            ConfidenceModel::Fixed(c) => unit(c),
            ConfidenceModel::Uniform { low, high } => unit(low) && unit(high) && low <= high,
        };
        if !unit(self.drop_rate) || !(self.jitter_px >= 0.0 && self.jitter_px.is_finite()) || !conf_ok {
            return Err(Error::InvalidArgument(format!("invalid replay noise {self:?}")));
        }
        Ok(())
    }
}

/// Simulated per-stage latency in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub pre_process_ms: f64,
    pub inference_ms: f64,
    pub nms_ms: f64,
}

/// How stage durations are measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClockMode {
    /// Sleep for the configured latency and measure with a monotonic clock.
    #[default]
    Wall,
    /// Report the configured latency exactly, without sleeping.
    Virtual,
}

/// Emits (optionally perturbed) ground truth as detections.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    truth: Arc<FrameTruth>,
    noise: ReplayNoise,
    seed: u64,
    latency: StageLatency,
    clock: ClockMode,
    descriptor: BackendDescriptor,
}

impl ReplayBackend {
    pub fn new(truth: Arc<FrameTruth>, noise: ReplayNoise, seed: u64) -> Result<Self> {
        noise.validate()?;
        Ok(Self {
            truth,
            noise,
            seed,
            latency: StageLatency::default(),
            clock: ClockMode::Wall,
            descriptor: BackendDescriptor {
                name: "replay".into(),
                model: "replay".into(),
                input_size: MODEL_INPUT_SIZE,
                nms: None,
            },
        })
    }

    pub fn with_latency(mut self, latency: StageLatency, clock: ClockMode) -> Self {
        self.latency = latency;
        self.clock = clock;
        self
    }

    fn stage<T>(&self, nominal_ms: f64, work: impl FnOnce() -> T) -> (T, f64) {
        match self.clock {
            ClockMode::Virtual => (work(), nominal_ms),
            ClockMode::Wall => {
                let start = Instant::now();
                let out = work();
                if nominal_ms > 0.0 {
                    thread::sleep(Duration::from_secs_f64(nominal_ms / 1000.0));
                }
                (out, start.elapsed().as_secs_f64() * 1000.0)
            }
        }
    }

    fn emit(&self, frame: &Frame, boxes: &[Annotation]) -> Result<Vec<Detection>> {
        let (w, h) = (frame.image.width() as f64, frame.image.height() as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(frame.index);
        let j = self.noise.jitter_px;
        let mut out = Vec::with_capacity(boxes.len());
        for a in boxes {
            // draw every variate so one box's outcome never shifts another's
            let dropped = rng.random::<f64>() < self.noise.drop_rate;
            let offsets: [f64; 4] =
                std::array::from_fn(|_| if j > 0.0 { rng.random_range(-j..=j) } else { 0.0 });
            let confidence = match self.noise.confidence {
                ConfidenceModel::Fixed(c) => c,
                ConfidenceModel::Uniform { low, high } if high > low => rng.random_range(low..=high),
                ConfidenceModel::Uniform { low, .. } => low,
            };
            if dropped {
                continue;
            }
            let t = to_corner_form(&a.bbox, w, h)?.to_array();
            let x = [t[0] + offsets[0], t[2] + offsets[2]];
            let y = [t[1] + offsets[1], t[3] + offsets[3]];
            let bbox = BoundingBox::new(x[0].min(x[1]), y[0].min(y[1]), x[0].max(x[1]), y[0].max(y[1]))?
                .clamp_to(w, h);
            out.push(Detection::new(
                bbox,
                confidence,
                a.class_id,
                frame_image_id(frame.index),
            )?);
        }
        Ok(out)
    }
}

impl Detector for ReplayBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn detect_frame(&mut self, frame: &Frame) -> Result<(Vec<Detection>, FrameTiming)> {
        let (_, pre) = self.stage(self.latency.pre_process_ms, || ());
        let (dets, inf) = self.stage(self.latency.inference_ms, || {
            let boxes = self
                .truth
                .get(&frame.index)
                .ok_or(Error::MissingTruth(frame.index))?;
            self.emit(frame, boxes)
        });
        let mut dets = dets?;
        let (_, nms) = self.stage(self.latency.nms_ms, || {
            dets.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        });
        Ok((dets, FrameTiming::from_stages(pre, inf, nms)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::NormalizedCenterBox;
    use image::RgbImage;

    fn truth() -> Arc<FrameTruth> {
        let a = |cx, cy| Annotation {
            class_id: 0,
            bbox: NormalizedCenterBox::new(cx, cy, 0.1, 0.1).unwrap(),
        };
        let mut t = FrameTruth::new();
        t.insert(0, vec![a(0.2, 0.2), a(0.7, 0.6)]);
        t.insert(1, vec![]);
        t.insert(2, (0..40).map(|i| a(0.05 + 0.02 * i as f64, 0.5)).collect());
        Arc::new(t)
    }

    fn frame(index: u64) -> Frame {
        Frame {
            index,
            image: RgbImage::new(200, 100),
        }
    }

    #[test]
    fn zero_noise_reproduces_truth() {
        let mut b = ReplayBackend::new(truth(), ReplayNoise::default(), 0).unwrap();
        let (dets, timing) = b.detect_frame(&frame(0)).unwrap();
        assert_eq!(dets.len(), 2);
        assert!(dets.iter().all(|d| d.confidence == 1.0));
        assert_eq!(dets[0].bbox.to_array(), [30.0, 15.0, 50.0, 25.0]);
        assert!(timing.is_additive());
    }

    #[test]
    fn drop_everything() {
        let noise = ReplayNoise {
            drop_rate: 1.0,
            ..ReplayNoise::default()
        };
        let mut b = ReplayBackend::new(truth(), noise, 0).unwrap();
        assert!(b.detect_frame(&frame(0)).unwrap().0.is_empty());
    }

    #[test]
    fn missing_frame_is_error() {
        let mut b = ReplayBackend::new(truth(), ReplayNoise::default(), 0).unwrap();
        assert!(matches!(b.detect_frame(&frame(9)), Err(Error::MissingTruth(9))));
    }

    #[test]
    fn seeded_noise_is_deterministic() {
        let noise = ReplayNoise {
            drop_rate: 0.5,
            jitter_px: 2.0,
            confidence: ConfidenceModel::Uniform { low: 0.3, high: 0.9 },
        };
        let run = || {
            let mut b = ReplayBackend::new(truth(), noise, 42).unwrap();
            b.detect_frame(&frame(2)).unwrap().0
        };
        let first = run();
        assert_eq!(first, run());
        assert!(!first.is_empty() && first.len() < 40);
    }

    #[test]
    fn jitter_stays_within_bound() {
        let noise = ReplayNoise {
            jitter_px: 2.0,
            ..ReplayNoise::default()
        };
        let t = truth();
        let mut b = ReplayBackend::new(t.clone(), noise, 7).unwrap();
        let f = frame(2);
        let (dets, _) = b.detect_frame(&f).unwrap();
        for d in &dets {
            let near = t[&2].iter().any(|a| {
                let tb = to_corner_form(&a.bbox, 200.0, 100.0).unwrap();
                d.bbox
                    .to_array()
                    .iter()
                    .zip(tb.to_array())
                    .all(|(x, y)| (x - y).abs() <= 2.0)
            });
            assert!(near, "{:?}", d.bbox);
        }
    }

    #[test]
    fn virtual_clock_reports_nominal_latency() {
        let latency = StageLatency {
            pre_process_ms: 1.0,
            inference_ms: 2.0,
            nms_ms: 3.0,
        };
        let mut b = ReplayBackend::new(truth(), ReplayNoise::default(), 0)
            .unwrap()
            .with_latency(latency, ClockMode::Virtual);
        let (_, t) = b.detect_frame(&frame(1)).unwrap();
        assert_eq!(t, FrameTiming::from_stages(1.0, 2.0, 3.0));
    }

    #[test]
    fn wall_clock_sleeps() {
        let latency = StageLatency {
            inference_ms: 5.0,
            ..StageLatency::default()
        };
        let mut b = ReplayBackend::new(truth(), ReplayNoise::default(), 0)
            .unwrap()
            .with_latency(latency, ClockMode::Wall);
        let (_, t) = b.detect_frame(&frame(1)).unwrap();
        assert!(t.inference_ms >= 5.0);
        assert!(t.is_additive());
    }

    #[test]
    fn loads_truth_dir() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("000003.txt"), "0 0.5 0.5 0.1 0.1\n").unwrap();
        fs::write(dir.path().join("4.txt"), "").unwrap();
        let t = load_frame_truth(dir.path()).unwrap();
        assert_eq!(t.keys().copied().collect::<Vec<_>>(), vec![3, 4]);
        fs::write(dir.path().join("abc.txt"), "").unwrap();
        assert!(load_frame_truth(dir.path()).is_err());
    }
}
