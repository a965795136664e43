//! Frame ingestion: PNG loading, grayscale conversion, resizing, and slicing
//! of sequences into overlapping temporal blocks.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array3;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// BT.601 luma weights used for grayscale conversion.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A single video frame with normalized intensities in `[0, 1]`.
///
/// Data layout is `(channels, height, width)` with 1 (gray) or 3 (RGB)
/// channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    data: Array3<f32>,
}

impl Frame {
    pub fn new(data: Array3<f32>) -> Result<Self> {
        let (c, h, w) = data.dim();
        if c != 1 && c != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                got: c,
            });
        }
        if h == 0 || w == 0 {
            return Err(Error::InvalidConfig(format!(
                "frame dimensions must be positive, got {w}x{h}"
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig(
                "frame contains non-finite intensities".into(),
            ));
        }
        Ok(Frame { data })
    }

    /// Build an RGB frame from a closure `(channel, y, x) -> intensity`.
    pub fn from_fn(
        channels: usize,
        height: usize,
        width: usize,
        f: impl Fn(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        Frame::new(Array3::from_shape_fn((channels, height, width), |(c, y, x)| {
            f(c, y, x)
        }))
    }

    pub fn width(&self) -> usize {
        self.data.dim().2
    }

    pub fn height(&self) -> usize {
        self.data.dim().1
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn data(&self) -> &Array3<f32> {
        &self.data
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel, y, x)]
    }

    /// BT.601 grayscale conversion of a 3-channel frame.
    ///
    /// The weighted sum is evaluated in f64 so that converting an already
    /// gray signal (replicated to 3 channels) is an exact identity.
    pub fn to_gray(&self) -> Result<Frame> {
        if self.channels() != 3 {
            return Err(Error::ChannelMismatch {
                expected: 3,
                got: self.channels(),
            });
        }
        let (_, h, w) = self.data.dim();
        let mut out = Array3::<f32>::zeros((1, h, w));
        for y in 0..h {
            for x in 0..w {
                let v = LUMA_WEIGHTS[0] * self.data[(0, y, x)] as f64
                    + LUMA_WEIGHTS[1] * self.data[(1, y, x)] as f64
                    + LUMA_WEIGHTS[2] * self.data[(2, y, x)] as f64;
                out[(0, y, x)] = v as f32;
            }
        }
        Frame::new(out)
    }

    /// Bilinear resize to `(width, height)`, sampling at pixel centers.
    pub fn resize(&self, width: usize, height: usize) -> Frame {
        let (c, sh, sw) = self.data.dim();
        if sw == width && sh == height {
            return self.clone();
        }
        let mut out = Array3::<f32>::zeros((c, height, width));
        let sx_scale = sw as f64 / width as f64;
        let sy_scale = sh as f64 / height as f64;
        for y in 0..height {
            let sy = ((y as f64 + 0.5) * sy_scale - 0.5).clamp(0.0, (sh - 1) as f64);
            let y0 = sy.floor() as usize;
            let y1 = (y0 + 1).min(sh - 1);
            let fy = sy - y0 as f64;
            for x in 0..width {
                let sx = ((x as f64 + 0.5) * sx_scale - 0.5).clamp(0.0, (sw - 1) as f64);
                let x0 = sx.floor() as usize;
                let x1 = (x0 + 1).min(sw - 1);
                let fx = sx - x0 as f64;
                for ch in 0..c {
                    let p00 = self.data[(ch, y0, x0)] as f64;
                    let p01 = self.data[(ch, y0, x1)] as f64;
                    let p10 = self.data[(ch, y1, x0)] as f64;
                    let p11 = self.data[(ch, y1, x1)] as f64;
                    let top = p00 + (p01 - p00) * fx;
                    let bot = p10 + (p11 - p10) * fx;
                    out[(ch, y, x)] = (top + (bot - top) * fy) as f32;
                }
            }
        }
        Frame { data: out }
    }
}

/// An ordered sequence of frames sharing one resolution and channel count.
#[derive(Debug, Clone)]
pub struct FrameSequence {
    frames: Vec<Arc<Frame>>,
    frame_indices: Vec<u64>,
    fps_hint: Option<f64>,
}

impl FrameSequence {
    pub fn new(frames: Vec<Frame>, frame_indices: Vec<u64>, fps_hint: Option<f64>) -> Result<Self> {
        if frames.len() != frame_indices.len() {
            return Err(Error::InvalidConfig(format!(
                "{} frames but {} indices",
                frames.len(),
                frame_indices.len()
            )));
        }
        if frames.is_empty() {
            return Err(Error::NoFrames(PathBuf::from("<memory>")));
        }
        if !frame_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidConfig(
                "frame indices must be strictly increasing".into(),
            ));
        }
        let (w, h, c) = (frames[0].width(), frames[0].height(), frames[0].channels());
        for f in &frames {
            if f.width() != w || f.height() != h || f.channels() != c {
                return Err(Error::InvalidConfig(
                    "all frames in a sequence must share dimensions and channels".into(),
                ));
            }
        }
        Ok(FrameSequence {
            frames: frames.into_iter().map(Arc::new).collect(),
            frame_indices,
            fps_hint,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> &Frame {
        &self.frames[i]
    }

    pub fn frames(&self) -> impl Iterator<Item = &Frame> {
        self.frames.iter().map(|f| f.as_ref())
    }

    pub fn frame_indices(&self) -> &[u64] {
        &self.frame_indices
    }

    pub fn fps_hint(&self) -> Option<f64> {
        self.fps_hint
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    /// Resize every frame to the given resolution.
    pub fn resized(&self, width: usize, height: usize) -> FrameSequence {
        if self.width() == width && self.height() == height {
            return self.clone();
        }
        let frames: Vec<Arc<Frame>> = self
            .frames
            .par_iter()
            .map(|f| Arc::new(f.resize(width, height)))
            .collect();
        FrameSequence {
            frames,
            frame_indices: self.frame_indices.clone(),
            fps_hint: self.fps_hint,
        }
    }
}

/// A window of `T'` consecutive frames, the unit of network inference.
///
/// Holds both the RGB view (network input) and the derived grayscale view
/// (for frame differencing). `start_index` is the 1-based position of the
/// first frame within the source sequence.
#[derive(Debug, Clone)]
pub struct TemporalBlock {
    rgb: Vec<Arc<Frame>>,
    gray: Vec<Arc<Frame>>,
    start_index: usize,
}

impl TemporalBlock {
    pub fn t_prime(&self) -> usize {
        self.rgb.len()
    }

    pub fn width(&self) -> usize {
        self.rgb[0].width()
    }

    pub fn height(&self) -> usize {
        self.rgb[0].height()
    }

    pub fn rgb(&self, t: usize) -> &Frame {
        &self.rgb[t]
    }

    pub fn gray(&self, t: usize) -> &Frame {
        &self.gray[t]
    }

    pub fn start_index(&self) -> usize {
        self.start_index
    }

    /// Build a block directly from frames (primarily for tests and tools).
    pub fn from_frames(rgb: Vec<Frame>, start_index: usize) -> Result<Self> {
        if rgb.len() < 2 {
            return Err(Error::BadBlockSize(rgb.len()));
        }
        let gray = rgb
            .iter()
            .map(|f| f.to_gray().map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(TemporalBlock {
            rgb: rgb.into_iter().map(Arc::new).collect(),
            gray,
            start_index,
        })
    }

    /// Horizontally mirrored copy (used by the optional flip augmentation).
    pub fn flipped(&self) -> TemporalBlock {
        let flip = |f: &Frame| {
            let (c, h, w) = f.data().dim();
            Frame::new(Array3::from_shape_fn((c, h, w), |(ch, y, x)| {
                f.get(ch, y, w - 1 - x)
            }))
            .expect("flipping preserves validity")
        };
        TemporalBlock {
            rgb: self.rgb.iter().map(|f| Arc::new(flip(f))).collect(),
            gray: self.gray.iter().map(|f| Arc::new(flip(f))).collect(),
            start_index: self.start_index,
        }
    }
}

/// Load a directory of numbered PNG frames (`000001.png`, `000002.png`, ...)
/// into a sequence sorted by numeric index, with intensities scaled to
/// `[0, 1]`.
pub fn load_sequence(dir: &Path) -> Result<FrameSequence> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        let is_png = path
            .extension()
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if !is_png {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Ok(index) = stem.parse::<u64>() else {
            continue;
        };
        numbered.push((index, path));
    }
    if numbered.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    numbered.sort_by_key(|(i, _)| *i);

    let frames: Vec<(u64, Frame)> = numbered
        .par_iter()
        .map(|(index, path)| load_png_frame(path).map(|f| (*index, f)))
        .collect::<Result<Vec<_>>>()?;

    let (w, h) = (frames[0].1.width(), frames[0].1.height());
    for ((_, path), (_, frame)) in numbered.iter().zip(&frames) {
        if frame.width() != w || frame.height() != h {
            return Err(Error::DimensionMismatch {
                file: path.clone(),
                expected_width: w,
                expected_height: h,
                width: frame.width(),
                height: frame.height(),
            });
        }
    }

    let (indices, frames): (Vec<u64>, Vec<Frame>) = frames.into_iter().unzip();
    FrameSequence::new(frames, indices, None)
}

fn load_png_frame(path: &Path) -> Result<Frame> {
    let img = image::open(path)
        .map_err(|e| Error::Image {
            file: path.to_path_buf(),
            message: e.to_string(),
        })?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = Array3::<f32>::zeros((3, h, w));
    for (x, y, pixel) in img.enumerate_pixels() {
        for c in 0..3 {
            data[(c, y as usize, x as usize)] = pixel.0[c] as f32 / 255.0;
        }
    }
    Frame::new(data)
}

/// Save a frame as an 8-bit PNG, quantizing intensities with rounding.
pub fn save_frame_png(frame: &Frame, path: &Path) -> Result<()> {
    let (w, h) = (frame.width() as u32, frame.height() as u32);
    let quant = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let bytes: Vec<u8> = match frame.channels() {
        3 => {
            let mut buf = Vec::with_capacity((w * h * 3) as usize);
            for y in 0..h as usize {
                for x in 0..w as usize {
                    for c in 0..3 {
                        buf.push(quant(frame.get(c, y, x)));
                    }
                }
            }
            buf
        }
        _ => {
            let mut buf = Vec::with_capacity((w * h * 3) as usize);
            for y in 0..h as usize {
                for x in 0..w as usize {
                    let v = quant(frame.get(0, y, x));
                    buf.extend_from_slice(&[v, v, v]);
                }
            }
            buf
        }
    };
    let img: image::RgbImage =
        image::ImageBuffer::from_raw(w, h, bytes).expect("buffer sized from dimensions");
    img.save(path).map_err(|e| Error::Image {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Slice a sequence into overlapping temporal blocks of `t_prime` frames
/// with stride 1. Returns exactly `T - T' + 1` blocks.
pub fn make_blocks(seq: &FrameSequence, t_prime: usize) -> Result<Vec<TemporalBlock>> {
    if t_prime < 2 {
        return Err(Error::BadBlockSize(t_prime));
    }
    if seq.len() < t_prime {
        return Err(Error::SequenceTooShort {
            len: seq.len(),
            t_prime,
        });
    }
    let grays: Vec<Arc<Frame>> = seq
        .frames
        .par_iter()
        .map(|f| {
            let g = if f.channels() == 1 {
                f.as_ref().clone()
            } else {
                f.to_gray().expect("3-channel frame")
            };
            Arc::new(g)
        })
        .collect();
    let mut blocks = Vec::with_capacity(seq.len() - t_prime + 1);
    for start in 0..=(seq.len() - t_prime) {
        blocks.push(TemporalBlock {
            rgb: seq.frames[start..start + t_prime].to_vec(),
            gray: grays[start..start + t_prime].to_vec(),
            start_index: start + 1,
        });
    }
    Ok(blocks)
}
