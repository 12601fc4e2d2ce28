use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stage a backend failure is attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    PreProcess,
    Inference,
    Nms,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Stage::Load => "load",
            Stage::PreProcess => "pre-process",
            Stage::Inference => "inference",
            Stage::Nms => "nms",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("detections and ground truth must share one image and class: {0}")]
    MixedGroup(String),

    #[error("undefined metric: {0}")]
    Undefined(String),

    #[error("line {line}: {message}")]
    Annotation { line: usize, message: String },

    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("{stage} stage failed: {message}")]
    Backend { stage: Stage, message: String },

    #[error("no ground truth for frame {0}")]
    MissingTruth(u64),

    #[error("unsupported video container: {0}")]
    UnsupportedContainer(String),

    #[error("video decode failed at frame {frame}: {message}")]
    Decode { frame: u64, message: String },

    #[error("report error: {0}")]
    Report(String),

    #[error("cancelled")]
    Cancelled,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    /// Attaches a file path to an error raised while reading that file.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// Backend stage a failure belongs to, looking through file context.
    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Backend { stage, .. } => Some(*stage),
            Error::MissingTruth(_) => Some(Stage::Inference),
            Error::File { source, .. } => source.stage(),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
