//! Video decoding contract: stream metadata plus a frame iterator.
//!
//! `.y4m` files are decoded natively. Other containers are converted to
//! `.y4m` with an `ffmpeg` binary from `PATH` when one is available.

mod y4m;

use std::collections::VecDeque;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use y4m::{Y4mReader, Y4mWriter, MAGIC as Y4M_MAGIC};

/// Frame rate as a positive rational `num / den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRate {
    pub num: u32,
    pub den: u32,
}

impl FrameRate {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::InvalidArgument(format!("invalid frame rate {num}:{den}")));
        }
        Ok(Self { num, den })
    }

    pub fn fps(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Whole seconds elapsed at the start of `frame_index`.
    pub fn second_of(&self, frame_index: u64) -> u64 {
        frame_index * self.den as u64 / self.num as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub width: u32,
    pub height: u32,
    pub fps: FrameRate,
    pub frame_count: u64,
}

impl VideoMeta {
    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 / self.fps.fps()
    }
}

/// A decoded RGB frame and its position in the stream.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: u64,
    pub image: RgbImage,
}

pub trait VideoSource: Send {
    fn meta(&self) -> &VideoMeta;

    /// Decodes the next frame; `Ok(None)` at end of stream.
    fn next_frame(&mut self) -> Result<Option<Frame>>;

    /// Advances past the next frame. Returns `false` at end of stream.
    fn skip_frame(&mut self) -> Result<bool> {
        Ok(self.next_frame()?.is_some())
    }
}

/// Frames held in memory; an `Err` entry simulates a corrupt frame.
pub struct MemorySource {
    meta: VideoMeta,
    frames: VecDeque<Result<RgbImage>>,
    next_index: u64,
}

impl MemorySource {
    pub fn new(fps: FrameRate, width: u32, height: u32, frames: Vec<Result<RgbImage>>) -> Self {
        Self {
            meta: VideoMeta {
                width,
                height,
                fps,
                frame_count: frames.len() as u64,
            },
            frames: frames.into(),
            next_index: 0,
        }
    }
}

impl VideoSource for MemorySource {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        match self.frames.pop_front() {
            None => Ok(None),
            Some(Err(e)) => Err(Error::Decode {
                frame: self.next_index,
                message: e.to_string(),
            }),
            Some(Ok(image)) => {
                let index = self.next_index;
                self.next_index += 1;
                Ok(Some(Frame { index, image }))
            }
        }
    }
}

/// Container families recognized at upload time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Container {
    Y4m,
    /// Needs `ffmpeg` to decode.
    Transcoded,
}

fn has_ffmpeg() -> bool {
    Command::new("ffmpeg")
        .arg("-version")
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .status()
        .is_ok_and(|s| s.success())
}

fn sniff(path: &Path) -> Result<[u8; 12]> {
    let mut head = [0u8; 12];
    let mut f = File::open(path)?;
    let mut filled = 0;
    while filled < head.len() {
        match f.read(&mut head[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    if filled == 0 {
        return Err(Error::UnsupportedContainer("empty file".into()));
    }
    Ok(head)
}

/// Identifies how a file would be decoded without decoding it.
pub fn probe_container(path: &Path) -> Result<Container> {
    let head = sniff(path)?;
    if head.starts_with(Y4M_MAGIC) {
        return Ok(Container::Y4m);
    }
    let iso_bmff = &head[4..8] == b"ftyp";
    let matroska = head.starts_with(&[0x1a, 0x45, 0xdf, 0xa3]);
    let riff = head.starts_with(b"RIFF") && &head[8..12] == b"AVI ";
    if iso_bmff || matroska || riff {
        if has_ffmpeg() {
            return Ok(Container::Transcoded);
        }
        return Err(Error::UnsupportedContainer(
            "compressed video needs ffmpeg on PATH; upload .y4m instead".into(),
        ));
    }
    Err(Error::UnsupportedContainer("unrecognized container".into()))
}

/// `.y4m` reader over a transcoded copy that is deleted on drop.
struct TranscodedSource {
    reader: Y4mReader,
    temp: PathBuf,
}

impl Drop for TranscodedSource {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.temp);
    }
}

impl VideoSource for TranscodedSource {
    fn meta(&self) -> &VideoMeta {
        self.reader.meta()
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        self.reader.next_frame()
    }

    fn skip_frame(&mut self) -> Result<bool> {
        self.reader.skip_frame()
    }
}

/// Opens a video file for decoding.
pub fn open_video(path: &Path) -> Result<Box<dyn VideoSource>> {
    match probe_container(path)? {
        Container::Y4m => Ok(Box::new(Y4mReader::open(path)?)),
        Container::Transcoded => {
            let temp = std::env::temp_dir().join(format!(
                "hivewatch-{}-{}.y4m",
                std::process::id(),
                path.file_name().and_then(|n| n.to_str()).unwrap_or("video")
            ));
            let status = Command::new("ffmpeg")
                .args(["-v", "error", "-y", "-i"])
                .arg(path)
                .args(["-f", "yuv4mpegpipe", "-pix_fmt", "yuv420p"])
                .arg(&temp)
                .status()?;
            if !status.success() {
                let _ = std::fs::remove_file(&temp);
                return Err(Error::UnsupportedContainer(format!(
                    "ffmpeg exited with {status}"
                )));
            }
            let reader = Y4mReader::open(&temp)?;
            Ok(Box::new(TranscodedSource { reader, temp }))
        }
    }
}
