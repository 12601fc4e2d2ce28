use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;

use super::replay::{load_frame_truth, ClockMode, ConfidenceModel, ReplayBackend, ReplayNoise, StageLatency};
use super::Detector;
use crate::error::{Error, Result};

/// Single-string backend selector.
///
/// ```text
/// replay:TRUTH_DIR[,drop=F][,jitter=PX][,seed=N][,conf=C|conf=LO..HI]
///                 [,latency=INF|latency=PRE/INF/NMS][,clock=wall|virtual]
/// model:PATH
/// ```
///
/// `PATH` may name the `.onnx` file or its `.toml` descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum BackendSpec {
    Replay {
        truth_dir: PathBuf,
        noise: ReplayNoise,
        /// Overrides the caller's default seed.
        seed: Option<u64>,
        latency: StageLatency,
        clock: ClockMode,
    },
    Model {
        path: PathBuf,
    },
}

fn bad(spec: &str, why: impl fmt::Display) -> Error {
    Error::InvalidArgument(format!("backend spec {spec:?}: {why}"))
}

fn parse_f64(spec: &str, key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| bad(spec, format!("{key}={v} is not a number")))
}

impl FromStr for BackendSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| bad(spec, "expected replay:DIR or model:PATH"))?;
        match kind {
            "model" if !rest.is_empty() => Ok(Self::Model { path: rest.into() }),
            "replay" => {
                let mut parts = rest.split(',');
                let dir = parts.next().unwrap_or_default();
                if dir.is_empty() {
                    return Err(bad(spec, "missing truth directory"));
                }
                let mut noise = ReplayNoise::default();
                let mut seed = None;
                let mut latency = StageLatency::default();
                let mut clock = ClockMode::Wall;
                for opt in parts {
                    let (k, v) = opt
                        .split_once('=')
                        .ok_or_else(|| bad(spec, format!("option {opt:?} is not key=value")))?;
                    match k {
                        "drop" => noise.drop_rate = parse_f64(spec, k, v)?,
                        "jitter" => noise.jitter_px = parse_f64(spec, k, v)?,
                        "seed" => seed = Some(v.parse().map_err(|_| bad(spec, format!("seed={v}")))?),
                        "conf" => {
                            noise.confidence = match v.split_once("..") {
                                Some((lo, hi)) => ConfidenceModel::Uniform {
                                    low: parse_f64(spec, k, lo)?,
                                    high: parse_f64(spec, k, hi)?,
                                },
                                None => ConfidenceModel::Fixed(parse_f64(spec, k, v)?),
                            }
                        }
                        "latency" => {
                            let ms: Vec<f64> = v
                                .split('/')
                                .map(|x| parse_f64(spec, k, x))
                                .collect::<Result<_>>()?;
                            if ms.iter().any(|&x| x < 0.0) {
                                return Err(bad(spec, "latency must be non-negative"));
                            }
                            latency = match ms[..] {
                                [inf] => StageLatency {
                                    inference_ms: inf,
                                    ..StageLatency::default()
                                },
                                [pre, inf, nms] => StageLatency {
                                    pre_process_ms: pre,
                                    inference_ms: inf,
                                    nms_ms: nms,
                                },
                                _ => return Err(bad(spec, "latency takes INF or PRE/INF/NMS")),
                            };
                        }
                        "clock" => {
                            clock = match v {
                                "wall" => ClockMode::Wall,
                                "virtual" => ClockMode::Virtual,
                                _ => return Err(bad(spec, format!("clock={v}"))),
                            }
                        }
                        _ => return Err(bad(spec, format!("unknown option {k:?}"))),
                    }
                }
                noise.validate().map_err(|e| bad(spec, e))?;
                Ok(Self::Replay {
                    truth_dir: dir.into(),
                    noise,
                    seed,
                    latency,
                    clock,
                })
            }
            _ => Err(bad(spec, "expected replay:DIR or model:PATH")),
        }
    }
}

impl fmt::Display for BackendSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Model { path } => write!(f, "model:{}", path.display()),
            Self::Replay {
                truth_dir,
                noise,
                seed,
                latency,
                clock,
            } => {
                write!(f, "replay:{}", truth_dir.display())?;
                if noise.drop_rate != 0.0 {
                    write!(f, ",drop={}", noise.drop_rate)?;
                }
                if noise.jitter_px != 0.0 {
                    write!(f, ",jitter={}", noise.jitter_px)?;
                }
                if let Some(s) = seed {
                    write!(f, ",seed={s}")?;
                }
                match noise.confidence {
                    ConfidenceModel::Fixed(1.0) => {}
                    ConfidenceModel::Fixed(c) => write!(f, ",conf={c}")?,
                    ConfidenceModel::Uniform { low, high } => write!(f, ",conf={low}..{high}")?,
                }
                if *latency != StageLatency::default() {
                    write!(
                        f,
                        ",latency={}/{}/{}",
                        latency.pre_process_ms, latency.inference_ms, latency.nms_ms
                    )?;
                }
                if *clock == ClockMode::Virtual {
                    write!(f, ",clock=virtual")?;
                }
                Ok(())
            }
        }
    }
}

/// Instantiates the backend. `default_seed` applies when the backend string carries no seed.
pub fn build_backend(spec: &BackendSpec, default_seed: u64) -> Result<Box<dyn Detector>> {
    match spec {
        BackendSpec::Replay {
            truth_dir,
            noise,
            seed,
            latency,
            clock,
        } => {
            let truth = Arc::new(load_frame_truth(truth_dir)?);
            let backend = ReplayBackend::new(truth, *noise, seed.unwrap_or(default_seed))?
                .with_latency(*latency, *clock);
            Ok(Box::new(backend))
        }
        #[cfg(feature = "onnx")]
        BackendSpec::Model { path } => Ok(Box::new(super::ModelBackend::load(path)?)),
        #[cfg(not(feature = "onnx"))]
        BackendSpec::Model { .. } => Err(Error::Backend {
            stage: crate::error::Stage::Load,
            message: "built without the onnx feature".into(),
        }),
    }
}
