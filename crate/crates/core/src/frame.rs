//! Image planes and displacement fields.

use crate::error::{Error, Result};

/// Rec.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A row-major, channel-interleaved image with samples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty frame {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::Shape(format!(
                "{width}x{height}x{channels} frame needs {} samples, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Value(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Frame {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds a frame by clamping every sample into `[0, 1]`.
    ///
    /// NaN samples are mapped to 0.
    pub fn from_clamped(width: usize, height: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|s| if s.is_nan() { 0.0 } else { s.clamp(0.0, 1.0) })
            .collect();
        Frame::new(width, height, channels, data)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f32) -> Result<Self> {
        Frame::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Single-channel frame from a closure over pixel coordinates.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Frame::from_clamped(width, height, 1, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_shape(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &Frame, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Rec.601 luma; single-channel frames are returned unchanged.
    pub fn to_luma(&self) -> Frame {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|px| {
                let l = LUMA_WEIGHTS[0] * px[0] as f64
                    + LUMA_WEIGHTS[1] * px[1] as f64
                    + LUMA_WEIGHTS[2] * px[2] as f64;
                (l as f32).clamp(0.0, 1.0)
            })
            .collect();
        Frame {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Per-pixel displacement in pixels: `u` positive right, `v` positive down.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    u: Vec<f32>,
    v: Vec<f32>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("empty flow field {width}x{height}")));
        }
        if u.len() != width * height || v.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} flow needs {} components per axis, got {} and {}",
                width * height,
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Value("flow contains non-finite components".into()));
        }
        Ok(FlowField { width, height, u, v })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
        }
    }

    pub fn constant(width: usize, height: usize, u: f32, v: f32) -> Self {
        FlowField {
            width,
            height,
            u: vec![u; width * height],
            v: vec![v; width * height],
        }
    }

    pub(crate) fn from_parts_unchecked(width: usize, height: usize, u: Vec<f32>, v: Vec<f32>) -> Self {
        debug_assert_eq!(u.len(), width * height);
        debug_assert_eq!(v.len(), width * height);
        FlowField { width, height, u, v }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn u(&self) -> &[f32] {
        &self.u
    }

    pub fn v(&self) -> &[f32] {
        &self.v
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    /// Every component multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> FlowField {
        FlowField {
            width: self.width,
            height: self.height,
            u: self.u.iter().map(|c| c * factor).collect(),
            v: self.v.iter().map(|c| c * factor).collect(),
        }
    }

    pub fn max_magnitude(&self) -> f32 {
        self.u
            .iter()
            .zip(&self.v)
            .map(|(u, v)| u.hypot(*v))
            .fold(0.0, f32::max)
    }

    /// Mean (u, v) over the field.
    pub fn mean(&self) -> (f64, f64) {
        let n = self.u.len() as f64;
        let su: f64 = self.u.iter().map(|&c| c as f64).sum();
        let sv: f64 = self.v.iter().map(|&c| c as f64).sum();
        (su / n, sv / n)
    }

    pub fn matches_frame(&self, frame: &Frame) -> bool {
        self.width == frame.width() && self.height == frame.height()
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|c| c.is_finite())
    }
}

/// An odd-length run of equally shaped frames around a centre index.
#[derive(Debug, Clone)]
pub struct SequenceWindow {
    frames: Vec<Frame>,
    center_index: usize,
}

impl SequenceWindow {
    pub fn new(frames: Vec<Frame>, center_index: usize) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::SequenceLength { need: 1, got: 0 });
        }
        if frames.len().is_multiple_of(2) {
            return Err(Error::Shape(format!("window length {} is even", frames.len())));
        }
        if center_index >= frames.len() {
            return Err(Error::Shape(format!(
                "centre index {center_index} outside window of {}",
                frames.len()
            )));
        }
        for f in &frames[1..] {
            frames[0].ensure_same_shape(f, "window frames")?;
        }
        Ok(SequenceWindow { frames, center_index })
    }

    /// Window of radius `radius` around `center` taken from `seq`, replicating
    /// the edge frames where the window runs past either end.
    pub fn replicate_padded(seq: &[Frame], center: usize, radius: usize) -> Result<Self> {
        if center >= seq.len() {
            return Err(Error::Shape(format!(
                "centre index {center} outside sequence of {}",
                seq.len()
            )));
        }
        let frames = (-(radius as isize)..=radius as isize)
            .map(|off| seq[replicate_index(center, off, seq.len())].clone())
            .collect();
        SequenceWindow::new(frames, radius)
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn center_index(&self) -> usize {
        self.center_index
    }

    pub fn center(&self) -> &Frame {
        &self.frames[self.center_index]
    }

    pub fn radius(&self) -> usize {
        self.frames.len() / 2
    }
}

/// Index of `center + offset` clamped into `0..len`.
pub fn replicate_index(center: usize, offset: isize, len: usize) -> usize {
    (center as isize + offset).clamp(0, len as isize - 1) as usize
}
