//! YUV4MPEG2 (`.y4m`) reader and writer, 8-bit 4:2:0 / 4:2:2 / 4:4:4 / mono.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;

use image::RgbImage;

use super::{Frame, FrameRate, VideoMeta, VideoSource};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"YUV4MPEG2";
const FRAME_TAG: &[u8] = b"FRAME";
const MAX_HEADER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    fn parse(tag: &str) -> Option<Self> {
        match tag {
            "420" | "420jpeg" | "420paldv" | "420mpeg2" => Some(Chroma::C420),
            "422" => Some(Chroma::C422),
            "444" => Some(Chroma::C444),
            "mono" => Some(Chroma::Mono),
            _ => None,
        }
    }

    /// Chroma plane dimensions for a `w x h` luma plane.
    fn plane(self, w: usize, h: usize) -> (usize, usize) {
        match self {
            Chroma::C420 => (w.div_ceil(2), h.div_ceil(2)),
            Chroma::C422 => (w.div_ceil(2), h),
            Chroma::C444 => (w, h),
            Chroma::Mono => (0, 0),
        }
    }
}

struct Header {
    width: u32,
    height: u32,
    fps: FrameRate,
    chroma: Chroma,
}

fn read_line<R: BufRead>(r: &mut R, buf: &mut Vec<u8>) -> io::Result<usize> {
    buf.clear();
    let n = r.by_ref().take(MAX_HEADER as u64).read_until(b'\n', buf)?;
    Ok(n)
}

fn parse_header(line: &[u8]) -> Result<Header> {
    let bad = |m: &str| Error::UnsupportedContainer(format!("y4m header: {m}"));
    let text = std::str::from_utf8(line).map_err(|_| bad("not ascii"))?;
    let mut tokens = text.trim_end_matches('\n').split(' ');
    if tokens.next().map(str::as_bytes) != Some(MAGIC) {
        return Err(bad("missing YUV4MPEG2 signature"));
    }
    let (mut width, mut height, mut fps, mut chroma) = (None, None, None, Chroma::C420);
    for t in tokens.filter(|t| !t.is_empty()) {
        let (key, val) = t.split_at(1);
        match key {
            "W" => width = val.parse::<u32>().ok(),
            "H" => height = val.parse::<u32>().ok(),
            "F" => {
                fps = val
                    .split_once(':')
                    .and_then(|(n, d)| FrameRate::new(n.parse().ok()?, d.parse().ok()?).ok())
            }
            "C" => {
                chroma = Chroma::parse(val).ok_or_else(|| bad(&format!("unsupported colorspace {val}")))?
            }
            "I" if !matches!(val, "p" | "?") => return Err(bad("interlaced video is not supported")),
            _ => {}
        }
    }
    match (width, height, fps) {
        (Some(w), Some(h), Some(fps)) if w > 0 && h > 0 => Ok(Header {
            width: w,
            height: h,
            fps,
            chroma,
        }),
        _ => Err(bad("missing or invalid W/H/F")),
    }
}

/// Seekable `.y4m` file source.
///
/// Opening scans the frame markers to count frames. A damaged tail (bad
/// marker or short final frame) is counted as one more frame whose decode
/// fails, so callers see an explicit decode error at that index.
pub struct Y4mReader {
    inner: BufReader<File>,
    header: Header,
    meta: VideoMeta,
    frame_bytes: usize,
    next_index: u64,
    line: Vec<u8>,
    buf: Vec<u8>,
}

impl Y4mReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut inner = BufReader::new(File::open(path)?);
        let mut line = Vec::new();
        read_line(&mut inner, &mut line)?;
        let header = parse_header(&line)?;
        let (w, h) = (header.width as usize, header.height as usize);
        let (cw, ch) = header.chroma.plane(w, h);
        let frame_bytes = w * h + 2 * cw * ch;

        let data_start = inner.stream_position()?;
        let file_len = inner.get_ref().metadata()?.len();
        let mut frame_count = 0u64;
        loop {
            let n = read_line(&mut inner, &mut line)?;
            if n == 0 {
                break;
            }
            if !line.starts_with(FRAME_TAG) || line.last() != Some(&b'\n') {
                frame_count += 1;
                break;
            }
            let pos = inner.stream_position()?;
            frame_count += 1;
            if pos + frame_bytes as u64 > file_len {
                break;
            }
            inner.seek_relative(frame_bytes as i64)?;
        }
        inner.seek(SeekFrom::Start(data_start))?;

        let meta = VideoMeta {
            width: header.width,
            height: header.height,
            fps: header.fps,
            frame_count,
        };
        Ok(Self {
            inner,
            header,
            meta,
            frame_bytes,
            next_index: 0,
            line,
            buf: vec![0; frame_bytes],
        })
    }

    fn read_frame_header(&mut self) -> Result<bool> {
        let n = read_line(&mut self.inner, &mut self.line)?;
        if n == 0 {
            return Ok(false);
        }
        if !self.line.starts_with(FRAME_TAG) || self.line.last() != Some(&b'\n') {
            return Err(Error::Decode {
                frame: self.next_index,
                message: "corrupt frame marker".into(),
            });
        }
        Ok(true)
    }

    fn decode(&self) -> RgbImage {
        let (w, h) = (self.header.width as usize, self.header.height as usize);
        let (cw, ch) = self.header.chroma.plane(w, h);
        let (y_plane, rest) = self.buf.split_at(w * h);
        let (u_plane, v_plane) = rest.split_at(cw * ch);
        let mut img = RgbImage::new(self.header.width, self.header.height);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let (x, y) = (x as usize, y as usize);
            let luma = y_plane[y * w + x];
            let (u, v) = if cw == 0 {
                (128, 128)
            } else {
                let cx = x * cw / w;
                let cy = y * ch / h;
                (u_plane[cy * cw + cx], v_plane[cy * cw + cx])
            };
            px.0 = yuv_to_rgb(luma, u, v);
        }
        img
    }
}

impl VideoSource for Y4mReader {
    fn meta(&self) -> &VideoMeta {
        &self.meta
    }

    fn next_frame(&mut self) -> Result<Option<Frame>> {
        if !self.read_frame_header()? {
            return Ok(None);
        }
        let index = self.next_index;
        let mut buf = std::mem::take(&mut self.buf);
        let read = self.inner.read_exact(&mut buf);
        self.buf = buf;
        read.map_err(|e| Error::Decode {
            frame: index,
            message: format!("short frame: {e}"),
        })?;
        self.next_index += 1;
        Ok(Some(Frame {
            index,
            image: self.decode(),
        }))
    }

    fn skip_frame(&mut self) -> Result<bool> {
        if !self.read_frame_header()? {
            return Ok(false);
        }
        let pos = self.inner.stream_position()?;
        let len = self.inner.get_ref().metadata()?.len();
        if pos + self.frame_bytes as u64 > len {
            return Err(Error::Decode {
                frame: self.next_index,
                message: "short frame".into(),
            });
        }
        self.inner.seek_relative(self.frame_bytes as i64)?;
        self.next_index += 1;
        Ok(true)
    }
}

// BT.601 limited-range conversion.
fn yuv_to_rgb(y: u8, u: u8, v: u8) -> [u8; 3] {
    let c = (y as f32 - 16.0) * 1.164_383;
    let d = u as f32 - 128.0;
    let e = v as f32 - 128.0;
    let clamp = |x: f32| x.round().clamp(0.0, 255.0) as u8;
    [
        clamp(c + 1.596_027 * e),
        clamp(c - 0.391_762 * d - 0.812_968 * e),
        clamp(c + 2.017_232 * d),
    ]
}

fn rgb_to_yuv(p: [u8; 3]) -> (f32, f32, f32) {
    let (r, g, b) = (p[0] as f32, p[1] as f32, p[2] as f32);
    (
        16.0 + 0.256_788 * r + 0.504_129 * g + 0.097_906 * b,
        128.0 - 0.148_223 * r - 0.290_993 * g + 0.439_216 * b,
        128.0 + 0.439_216 * r - 0.367_788 * g - 0.071_427 * b,
    )
}

/// Writes 4:2:0 `.y4m` streams from RGB frames.
pub struct Y4mWriter<W: Write> {
    out: W,
    width: u32,
    height: u32,
}

impl<W: Write> Y4mWriter<W> {
    pub fn new(mut out: W, width: u32, height: u32, fps: FrameRate) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("video dimensions must be positive".into()));
        }
        writeln!(
            out,
            "YUV4MPEG2 W{width} H{height} F{}:{} Ip A1:1 C420jpeg",
            fps.num, fps.den
        )?;
        Ok(Self { out, width, height })
    }

    pub fn write_frame(&mut self, img: &RgbImage) -> Result<()> {
        if img.dimensions() != (self.width, self.height) {
            return Err(Error::InvalidArgument(
                "frame size differs from stream size".into(),
            ));
        }
        let (w, h) = (self.width as usize, self.height as usize);
        let (cw, ch) = Chroma::C420.plane(w, h);
        let mut y_plane = vec![0u8; w * h];
        let mut u_acc = vec![(0.0f32, 0u32); cw * ch];
        let mut v_acc = vec![0.0f32; cw * ch];
        for (x, y, px) in img.enumerate_pixels() {
            let (x, y) = (x as usize, y as usize);
            let (luma, u, v) = rgb_to_yuv(px.0);
            y_plane[y * w + x] = luma.round().clamp(0.0, 255.0) as u8;
            let c = (y / 2) * cw + x / 2;
            u_acc[c].0 += u;
            u_acc[c].1 += 1;
            v_acc[c] += v;
        }
        self.out.write_all(b"FRAME\n")?;
        self.out.write_all(&y_plane)?;
        let avg = |s: f32, n: u32| (s / n as f32).round().clamp(0.0, 255.0) as u8;
        let u: Vec<u8> = u_acc.iter().map(|&(s, n)| avg(s, n)).collect();
        let v: Vec<u8> = v_acc.iter().zip(&u_acc).map(|(&s, &(_, n))| avg(s, n)).collect();
        self.out.write_all(&u)?;
        self.out.write_all(&v)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush()?;
        Ok(self.out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn write_video(path: &Path, frames: u32, w: u32, h: u32) {
        let file = File::create(path).unwrap();
        let mut wr = Y4mWriter::new(file, w, h, FrameRate::new(30, 1).unwrap()).unwrap();
        for i in 0..frames {
            let img = RgbImage::from_pixel(w, h, Rgb([(i * 20) as u8, 100, 200]));
            wr.write_frame(&img).unwrap();
        }
        wr.finish().unwrap();
    }

    #[test]
    fn round_trip_counts_and_colors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.y4m");
        write_video(&path, 5, 7, 5);
        let mut r = Y4mReader::open(&path).unwrap();
        assert_eq!(r.meta().frame_count, 5);
        assert_eq!((r.meta().width, r.meta().height), (7, 5));
        assert!(r.skip_frame().unwrap());
        let f = r.next_frame().unwrap().unwrap();
        assert_eq!(f.index, 1);
        let px = f.image.get_pixel(3, 3).0;
        for (got, want) in px.iter().zip([20u8, 100, 200]) {
            assert!((*got as i32 - want as i32).abs() <= 2, "{px:?}");
        }
        let mut rest = 0;
        while r.next_frame().unwrap().is_some() {
            rest += 1;
        }
        assert_eq!(rest, 3);
    }

    #[test]
    fn truncated_tail_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.y4m");
        write_video(&path, 4, 8, 8);
        let len = std::fs::metadata(&path).unwrap().len();
        let f = std::fs::OpenOptions::new().write(true).open(&path).unwrap();
        f.set_len(len - 10).unwrap();

        let mut r = Y4mReader::open(&path).unwrap();
        assert_eq!(r.meta().frame_count, 4);
        for _ in 0..3 {
            r.next_frame().unwrap().unwrap();
        }
        assert!(matches!(r.next_frame(), Err(Error::Decode { frame: 3, .. })));
    }

    #[test]
    fn rejects_foreign_and_unsupported_headers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.y4m");
        std::fs::write(&path, b"\x00\x00\x00\x18ftypmp42").unwrap();
        assert!(matches!(
            Y4mReader::open(&path),
            Err(Error::UnsupportedContainer(_))
        ));
        std::fs::write(&path, b"YUV4MPEG2 W8 H8 F30:1 C420p10\n").unwrap();
        assert!(Y4mReader::open(&path).is_err());
        std::fs::write(&path, b"YUV4MPEG2 W8 F30:1\n").unwrap();
        assert!(Y4mReader::open(&path).is_err());
    }

    #[test]
    fn mono_stream_decodes_gray() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.y4m");
        let mut bytes = b"YUV4MPEG2 W2 H2 F25:1 Cmono\nFRAME\n".to_vec();
        bytes.extend([235u8; 4]);
        std::fs::write(&path, bytes).unwrap();
        let mut r = Y4mReader::open(&path).unwrap();
        assert_eq!(r.meta().fps, FrameRate::new(25, 1).unwrap());
        let f = r.next_frame().unwrap().unwrap();
        assert_eq!(f.image.get_pixel(0, 0).0, [255, 255, 255]);
        assert!(r.next_frame().unwrap().is_none());
    }
}
