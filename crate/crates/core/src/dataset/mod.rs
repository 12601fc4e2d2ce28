//! Annotated image corpora: sidecar parsing, statistics, splits and letterboxing.

mod annotation;
mod letterbox;
mod split;
mod stats;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::ImageId;

pub(crate) use annotation::{fields, parse_box};
pub use annotation::{parse_annotation_file, serialize_annotations, Annotation};
pub use letterbox::{letterbox, Letterbox, LETTERBOX_PAD_VALUE, MODEL_INPUT_SIZE};
pub use split::{split, SplitSizes, SplitSpec};
pub use stats::{compute_stats, DatasetStats, Histogram};

/// Image extensions probed when looking up the pixel size of a labelled image.
pub const IMAGE_EXTENSIONS: [&str; 5] = ["jpg", "jpeg", "png", "bmp", "JPG"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedImage {
    pub image_id: ImageId,
    pub source: PathBuf,
    pub width: u32,
    pub height: u32,
    pub annotations: Vec<Annotation>,
}

impl AnnotatedImage {
    pub fn new(
        image_id: impl Into<ImageId>,
        width: u32,
        height: u32,
        annotations: Vec<Annotation>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        Ok(Self {
            image_id: image_id.into(),
            source: PathBuf::new(),
            width,
            height,
            annotations,
        })
    }
}

/// Directory holding the `.txt` sidecars: `<root>/labels` when present, else `<root>`.
pub fn labels_dir(root: &Path) -> PathBuf {
    let labels = root.join("labels");
    if labels.is_dir() {
        labels
    } else {
        root.to_path_buf()
    }
}

fn find_image(root: &Path, stem: &str) -> Option<PathBuf> {
    let dirs = [root.join("images"), root.to_path_buf()];
    dirs.iter()
        .flat_map(|d| {
            IMAGE_EXTENSIONS
                .iter()
                .map(move |ext| d.join(format!("{stem}.{ext}")))
        })
        .find(|p| p.is_file())
}

/// Sorted `.txt` files in `dir`.
pub fn sidecar_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "txt"))
        .collect();
    files.sort();
    Ok(files)
}

/// Loads every sidecar under `root`.
///
/// Image dimensions are read from the header of a same-stem image in
/// `<root>/images` or `<root>`; sidecars without an image are assumed to
/// describe a [`MODEL_INPUT_SIZE`] square.
pub fn load_corpus(root: &Path) -> Result<Vec<AnnotatedImage>> {
    let mut corpus = Vec::new();
    for path in sidecar_files(&labels_dir(root))? {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidArgument(format!("bad file name {}", path.display())))?
            .to_string();
        let text = fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        let annotations = parse_annotation_file(&text).map_err(|e| e.in_file(&path))?;
        let (source, (width, height)) = match find_image(root, &stem) {
            Some(img) => {
                let dims = image::image_dimensions(&img).map_err(|e| Error::from(e).in_file(&img))?;
                (img, dims)
            }
            None => (path.clone(), (MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)),
        };
        let mut item = AnnotatedImage::new(stem, width, height, annotations)?;
        item.source = source;
        corpus.push(item);
    }
    Ok(corpus)
}
