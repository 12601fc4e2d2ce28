use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use tract_onnx::prelude::*;

use super::{frame_image_id, BackendDescriptor, Detector, FrameTiming};
use crate::dataset::{letterbox, Letterbox, MODEL_INPUT_SIZE};
use crate::error::{Error, Result, Stage};
use crate::evaluation::Detection;
use crate::geometry::BoundingBox;
use crate::media::Frame;
use crate::nms::{suppress, NmsConfig};

/// Arrangement of the candidate tensor.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputLayout {
    /// `[1, N, 5 + classes]`: cx, cy, w, h, objectness, class scores.
    #[default]
    Yolov5,
    /// `[1, 4 + classes, N]`: cx, cy, w, h, class scores; no objectness.
    Yolov8,
}

fn default_input_size() -> u32 {
    MODEL_INPUT_SIZE
}

fn default_class_names() -> Vec<String> {
    vec!["bee".into()]
}

/// Companion `.toml` file describing a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescriptor {
    /// Relative to the descriptor; defaults to the descriptor path with `.onnx`.
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_input_size")]
    pub input_size: u32,
    #[serde(default = "default_class_names")]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub layout: OutputLayout,
    #[serde(default = "defaults::iou_threshold")]
    pub iou_threshold: f64,
    #[serde(default = "defaults::confidence_floor")]
    pub confidence_floor: f64,
    #[serde(default = "defaults::max_detections")]
    pub max_detections: usize,
}

mod defaults {
    use crate::nms::NmsConfig;

    pub fn iou_threshold() -> f64 {
        NmsConfig::default().iou_threshold
    }

    pub fn confidence_floor() -> f64 {
        NmsConfig::default().confidence_floor
    }

    pub fn max_detections() -> usize {
        NmsConfig::default().max_detections
    }
}

impl Default for ModelDescriptor {
    fn default() -> Self {
        Self {
            model: None,
            input_size: MODEL_INPUT_SIZE,
            class_names: default_class_names(),
            layout: OutputLayout::default(),
            iou_threshold: defaults::iou_threshold(),
            confidence_floor: defaults::confidence_floor(),
            max_detections: defaults::max_detections(),
        }
    }
}

impl ModelDescriptor {
    pub fn nms(&self) -> NmsConfig {
        NmsConfig {
            iou_threshold: self.iou_threshold,
            confidence_floor: self.confidence_floor,
            max_detections: self.max_detections,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::InvalidArgument("input_size must be positive".into()));
        }
        if self.class_names.is_empty() {
            return Err(Error::InvalidArgument("class_names must not be empty".into()));
        }
        self.nms().validate()
    }

    /// Resolves `path` (either the `.onnx` or the `.toml`) to a model file
    /// and its descriptor. A missing descriptor means defaults.
    pub fn locate(path: &Path) -> Result<(PathBuf, Self)> {
        let load_err = |m: String| Error::Backend {
            stage: Stage::Load,
            message: m,
        };
        let is_toml = path.extension().is_some_and(|e| e == "toml");
        let toml_path = if is_toml {
            path.to_path_buf()
        } else {
            path.with_extension("toml")
        };
        let descriptor = if toml_path.is_file() {
            let text = std::fs::read_to_string(&toml_path)
                .map_err(|e| load_err(format!("{}: {e}", toml_path.display())))?;
            toml::from_str::<Self>(&text).map_err(|e| load_err(format!("{}: {e}", toml_path.display())))?
        } else if is_toml {
            return Err(load_err(format!("{} not found", toml_path.display())));
        } else {
            Self::default()
        };
        descriptor.validate()?;
        let model = match (&descriptor.model, is_toml) {
            (Some(m), _) => toml_path.parent().unwrap_or(Path::new(".")).join(m),
            (None, true) => path.with_extension("onnx"),
            (None, false) => path.to_path_buf(),
        };
        Ok((model, descriptor))
    }
}

/// Runs an exported ONNX detector with a single image input
/// (`[1, 3, S, S]`, RGB scaled to 0..1) and a single candidate output.
pub struct ModelBackend {
    plan: Arc<TypedRunnableModel>,
    config: ModelDescriptor,
    descriptor: BackendDescriptor,
}

impl std::fmt::Debug for ModelBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelBackend")
            .field("descriptor", &self.descriptor)
            .finish_non_exhaustive()
    }
}

fn stage_err(stage: Stage) -> impl Fn(TractError) -> Error {
    move |e| Error::Backend {
        stage,
        message: format!("{e:#}"),
    }
}

impl ModelBackend {
    pub fn load(path: &Path) -> Result<Self> {
        let (model_path, config) = ModelDescriptor::locate(path)?;
        let s = config.input_size as usize;
        let plan = tract_onnx::onnx()
            .model_for_path(&model_path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, s, s]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| Error::Backend {
                stage: Stage::Load,
                message: format!("{}: {e:#}", model_path.display()),
            })?;
        let descriptor = BackendDescriptor {
            name: model_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into()),
            model: model_path.display().to_string(),
            input_size: config.input_size,
            nms: Some(config.nms()),
        };
        Ok(Self {
            plan,
            config,
            descriptor,
        })
    }

    fn to_tensor(&self, frame: &Frame) -> Result<(Tensor, Letterbox)> {
        let lb = letterbox(frame.image.width(), frame.image.height(), self.config.input_size)?;
        let canvas = lb.apply(&frame.image)?;
        let s = self.config.input_size as usize;
        let array = tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, c, y, x)| {
            canvas.get_pixel(x as u32, y as u32)[c] as f32 / 255.0
        });
        Ok((array.into(), lb))
    }

    fn decode(&self, output: &TValue, lb: &Letterbox, frame: &Frame) -> Result<Vec<Detection>> {
        let err = |m: String| Error::Backend {
            stage: Stage::Nms,
            message: m,
        };
        let view = output
            .to_plain_array_view::<f32>()
            .map_err(|e| err(format!("{e:#}")))?;
        let shape = view.shape().to_vec();
        let nc = self.config.class_names.len();
        let (n, attrs, transposed) = match (self.config.layout, shape.as_slice()) {
            (OutputLayout::Yolov5, &[1, n, a]) if a == 5 + nc => (n, a, false),
            (OutputLayout::Yolov8, &[1, a, n]) if a == 4 + nc => (n, a, true),
            _ => {
                return Err(err(format!(
                    "unexpected output shape {shape:?} for {:?} with {nc} classes",
                    self.config.layout
                )))
            }
        };
        let at = |i: usize, k: usize| -> f64 {
            let idx = if transposed { [0, k, i] } else { [0, i, k] };
            view[idx.as_slice()] as f64
        };
        let score_base = attrs - nc;
        let (w, h) = (frame.image.width() as f64, frame.image.height() as f64);
        let mut candidates = Vec::new();
        for i in 0..n {
            let (class_id, class_score) =
                (0..nc)
                    .map(|c| (c, at(i, score_base + c)))
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |best, cur| if cur.1 > best.1 { cur } else { best },
                    );
            let confidence = match self.config.layout {
                OutputLayout::Yolov5 => at(i, 4) * class_score,
                OutputLayout::Yolov8 => class_score,
            };
            if confidence.is_nan() || confidence < self.config.confidence_floor || confidence > 1.0 {
                continue;
            }
            let (cx, cy, bw, bh) = (at(i, 0), at(i, 1), at(i, 2), at(i, 3));
            let Ok(b) = BoundingBox::new(cx - bw / 2.0, cy - bh / 2.0, cx + bw / 2.0, cy + bh / 2.0) else {
                continue;
            };
            let b = lb.inverse(&b).clamp_to(w, h);
            if b.area() <= 0.0 {
                continue;
            }
            candidates.push(Detection::new(
                b,
                confidence,
                class_id as u32,
                frame_image_id(frame.index),
            )?);
        }
        Ok(suppress(&candidates, &self.config.nms()))
    }
}

impl Detector for ModelBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn detect_frame(&mut self, frame: &Frame) -> Result<(Vec<Detection>, FrameTiming)> {
        let t0 = Instant::now();
        let (tensor, lb) = self.to_tensor(frame).map_err(|e| Error::Backend {
            stage: Stage::PreProcess,
            message: e.to_string(),
        })?;
        let t1 = Instant::now();
        let outputs = self
            .plan
            .run(tvec!(tensor.into_tvalue()))
            .map_err(stage_err(Stage::Inference))?;
        let t2 = Instant::now();
        let output = outputs.first().ok_or_else(|| Error::Backend {
            stage: Stage::Inference,
            message: "model produced no outputs".into(),
        })?;
        let dets = self.decode(output, &lb, frame)?;
        let t3 = Instant::now();
        let ms = |a: Instant, b: Instant| (b - a).as_secs_f64() * 1000.0;
        Ok((dets, FrameTiming::from_stages(ms(t0, t1), ms(t1, t2), ms(t2, t3))))
    }
}
