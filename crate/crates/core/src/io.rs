//! PNG frame sequences and Middlebury `.flo` flow files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame};

/// Default frame filename template.
pub const DEFAULT_PATTERN: &str = "%06d.png";

/// Little-endian float sentinel at the start of every `.flo` file.
pub const FLO_SENTINEL: f32 = 202021.25;

/// A filename template with a single printf-style integer field, e.g.
/// `%06d.png` or `frame_%d.png`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePattern {
    template: String,
    prefix: String,
    pad: usize,
    suffix: String,
}

impl FramePattern {
    pub fn parse(template: &str) -> Result<Self> {
        let start = template
            .find('%')
            .ok_or_else(|| Error::Config(format!("pattern `{template}` has no %d field")))?;
        let rest = &template[start + 1..];
        let end = rest
            .find('d')
            .ok_or_else(|| Error::Config(format!("pattern `{template}` has no %d field")))?;
        let field = &rest[..end];
        let pad = if field.is_empty() {
            0
        } else if field.bytes().all(|b| b.is_ascii_digit()) {
            field.parse()
                .map_err(|_| Error::Config(format!("bad field width in `{template}`")))?
        } else {
            return Err(Error::Config(format!("unsupported field `%{field}d` in `{template}`")));
        };
        let suffix = &rest[end + 1..];
        if suffix.contains('%') || template[..start].contains('%') {
            return Err(Error::Config(format!("pattern `{template}` has more than one field")));
        }
        Ok(FramePattern {
            template: template.to_string(),
            prefix: template[..start].to_string(),
            pad,
            suffix: suffix.to_string(),
        })
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }

    pub fn format(&self, index: usize) -> String {
        format!("{}{:0width$}{}", self.prefix, index, self.suffix, width = self.pad)
    }

    /// Numeric index encoded in `name`, if it matches the template.
    pub fn index_of(&self, name: &str) -> Option<u64> {
        let digits = name.strip_prefix(&self.prefix)?.strip_suffix(&self.suffix)?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if self.pad > 0 && digits.len() < self.pad {
            return None;
        }
        digits.parse().ok()
    }
}

impl Default for FramePattern {
    fn default() -> Self {
        FramePattern::parse(DEFAULT_PATTERN).unwrap()
    }
}

/// Paths in `dir` matching `pattern`, sorted by their numeric index.
pub fn list_sequence(dir: &Path, pattern: &FramePattern) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if let Some(idx) = pattern.index_of(name) {
            found.push((idx, entry.path()));
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

/// Loads every frame in `dir` matching `pattern`, in ascending index order.
pub fn load_sequence(dir: &Path, pattern: &FramePattern) -> Result<Vec<Frame>> {
    let paths = list_sequence(dir, pattern)?;
    if paths.is_empty() {
        return Err(Error::EmptySequence {
            dir: dir.to_path_buf(),
            pattern: pattern.as_str().to_string(),
        });
    }
    let mut frames: Vec<Frame> = Vec::with_capacity(paths.len());
    for path in &paths {
        let frame = load_frame(path)?;
        if let Some(first) = frames.first() {
            if !first.same_shape(&frame) {
                return Err(Error::Shape(format!(
                    "{} is {}x{}x{}, sequence started at {}x{}x{}",
                    path.display(),
                    frame.width(),
                    frame.height(),
                    frame.channels(),
                    first.width(),
                    first.height(),
                    first.channels()
                )));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// Decodes an 8- or 16-bit image into a normalized frame. Alpha is dropped.
pub fn load_frame(path: &Path) -> Result<Frame> {
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| format_err(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let norm8 = |b: &u8| *b as f32 / 255.0;
    let norm16 = |b: &u16| *b as f32 / 65535.0;
    let (channels, data): (usize, Vec<f32>) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(norm8).collect()),
        DynamicImage::ImageLumaA8(_) => (1, img.to_luma8().as_raw().iter().map(norm8).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.as_raw().iter().map(norm8).collect()),
        DynamicImage::ImageRgba8(_) => (3, img.to_rgb8().as_raw().iter().map(norm8).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(norm16).collect()),
        DynamicImage::ImageLumaA16(_) => (1, img.to_luma16().as_raw().iter().map(norm16).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.as_raw().iter().map(norm16).collect()),
        DynamicImage::ImageRgba16(_) => (3, img.to_rgb16().as_raw().iter().map(norm16).collect()),
        other => {
            return Err(format_err(format!(
                "unsupported sample type {:?}",
                other.color()
            )))
        }
    };
    Frame::new(w, h, channels, data).map_err(|e| format_err(e.to_string()))
}

/// 8-bit quantization with round-half-up, clamped to `[0, 255]`.
#[inline]
pub fn quantize(sample: f32) -> u8 {
    (sample as f64 * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Writes `frame` as an 8-bit PNG.
pub fn save_frame(frame: &Frame, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = frame.data().iter().map(|&s| quantize(s)).collect();
    let color = if frame.channels() == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::save_buffer_with_format(
        path,
        &bytes,
        frame.width() as u32,
        frame.height() as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Format {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Writes every frame to `dir` using `pattern`, numbering from 0.
pub fn save_sequence(frames: &[Frame], dir: &Path, pattern: &FramePattern) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(pattern.format(i));
            save_frame(f, &path).map(|_| path)
        })
        .collect()
}

/// Serializes a flow field in the Middlebury `.flo` layout.
pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * flow.width() * flow.height());
    out.extend_from_slice(&FLO_SENTINEL.to_le_bytes());
    out.extend_from_slice(&(flow.width() as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as i32).to_le_bytes());
    for (u, v) in flow.u().iter().zip(flow.v()) {
        out.extend_from_slice(&u.to_le_bytes());
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_flow(bytes: &[u8], path: &Path) -> Result<FlowField> {
    let format_err = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 12 {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected: 12,
            found: bytes.len(),
        });
    }
    let word = |i: usize| -> [u8; 4] { bytes[i..i + 4].try_into().unwrap() };
    let sentinel = f32::from_le_bytes(word(0));
    if sentinel != FLO_SENTINEL {
        return Err(format_err(format!("bad .flo sentinel {sentinel}")));
    }
    let width = i32::from_le_bytes(word(4));
    let height = i32::from_le_bytes(word(8));
    if width <= 0 || height <= 0 {
        return Err(format_err(format!("bad .flo dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = 12 + 8 * width * height;
    if bytes.len() < expected {
        return Err(Error::Length {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    let mut u = Vec::with_capacity(width * height);
    let mut v = Vec::with_capacity(width * height);
    for px in bytes[12..expected].chunks_exact(8) {
        u.push(f32::from_le_bytes(px[0..4].try_into().unwrap()));
        v.push(f32::from_le_bytes(px[4..8].try_into().unwrap()));
    }
    FlowField::new(width, height, u, v).map_err(|e| format_err(e.to_string()))
}

pub fn write_flow(flow: &FlowField, path: &Path) -> Result<()> {
    if !flow.is_finite() {
        return Err(Error::Value("refusing to write non-finite flow".into()));
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_flow(flow))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_flow(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes, path)
}

/// Writes a `[0, 1]` scalar map as an 8-bit grayscale PNG.
pub fn save_map(values: &[f32], width: usize, height: usize, path: &Path) -> Result<()> {
    let frame = Frame::from_clamped(width, height, 1, values.to_vec())?;
    save_frame(&frame, path)
}
