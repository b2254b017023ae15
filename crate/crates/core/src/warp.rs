//! Backward bilinear warping.

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame};

/// A warped image together with a per-pixel validity mask.
///
/// A pixel is valid when its source coordinate lies inside the hull of pixel
/// centres, i.e. every bilinear tap with non-zero weight is in the image.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedFrame {
    pub image: Frame,
    pub validity: Vec<bool>,
}

impl WarpedFrame {
    /// Wraps an already aligned frame with an all-valid mask.
    pub fn aligned(image: Frame) -> Self {
        let validity = vec![true; image.pixel_count()];
        WarpedFrame { image, validity }
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.validity[y * self.image.width() + x]
    }

    pub fn valid_ratio(&self) -> f64 {
        let n = self.validity.iter().filter(|v| **v).count();
        n as f64 / self.validity.len() as f64
    }
}

/// Bilinear sample of channel `c` at `(sx, sy)`, with the coordinate clamped
/// to the image border.
#[inline]
pub(crate) fn sample_clamped(
    data: &[f32],
    width: usize,
    height: usize,
    channels: usize,
    c: usize,
    sx: f64,
    sy: f64,
) -> f64 {
    let sx = sx.clamp(0.0, (width - 1) as f64);
    let sy = sy.clamp(0.0, (height - 1) as f64);
    let x0 = sx.floor() as usize;
    let y0 = sy.floor() as usize;
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = sx - x0 as f64;
    let fy = sy - y0 as f64;
    let at = |x: usize, y: usize| data[(y * width + x) * channels + c] as f64;
    (1.0 - fx) * (1.0 - fy) * at(x0, y0)
        + fx * (1.0 - fy) * at(x1, y0)
        + (1.0 - fx) * fy * at(x0, y1)
        + fx * fy * at(x1, y1)
}

/// `out(x) = frame(x + flow(x))` with bilinear interpolation.
///
/// Source coordinates outside the image are clamped to the border and the
/// pixel is flagged invalid.
pub fn warp(frame: &Frame, flow: &FlowField) -> Result<WarpedFrame> {
    if !flow.matches_frame(frame) {
        return Err(Error::Shape(format!(
            "warp: frame {}x{} vs flow {}x{}",
            frame.width(),
            frame.height(),
            flow.width(),
            flow.height()
        )));
    }
    if !flow.is_finite() {
        return Err(Error::Value("warp: flow contains non-finite components".into()));
    }
    let (w, h, ch) = (frame.width(), frame.height(), frame.channels());
    let src = frame.data();
    let mut data = Vec::with_capacity(src.len());
    let mut validity = Vec::with_capacity(w * h);
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.at(x, y);
            let sx = x as f64 + u as f64;
            let sy = y as f64 + v as f64;
            validity.push((0.0..=max_x).contains(&sx) && (0.0..=max_y).contains(&sy));
            for c in 0..ch {
                data.push(sample_clamped(src, w, h, ch, c, sx, sy) as f32);
            }
        }
    }
    Ok(WarpedFrame {
        image: Frame::from_clamped(w, h, ch, data)?,
        validity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_flow_is_identity() {
        let f = Frame::new(3, 2, 1, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let w = warp(&f, &FlowField::zeros(3, 2)).unwrap();
        assert_eq!(w.image, f);
        assert!(w.validity.iter().all(|v| *v));
    }

    #[test]
    fn half_pixel_shift_is_midpoint() {
        let f = Frame::new(2, 1, 1, vec![0.2, 0.8]).unwrap();
        let w = warp(&f, &FlowField::constant(2, 1, 0.5, 0.0)).unwrap();
        assert!((w.image.data()[0] - 0.5).abs() < 1e-7);
        assert!(w.validity[0]);
        assert!(!w.validity[1]);
    }

    #[test]
    fn out_of_bounds_is_clamped_and_flagged() {
        let f = Frame::new(4, 1, 1, vec![0.0, 0.25, 0.5, 1.0]).unwrap();
        let w = warp(&f, &FlowField::constant(4, 1, 1.0, 0.0)).unwrap();
        assert_eq!(w.validity, vec![true, true, true, false]);
        assert_eq!(w.image.data(), &[0.25, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn errors() {
        let f = Frame::filled(3, 3, 1, 0.5).unwrap();
        assert!(matches!(warp(&f, &FlowField::zeros(3, 2)), Err(Error::Shape(_))));
        let nan = FlowField::from_parts_unchecked(3, 3, vec![f32::NAN; 9], vec![0.0; 9]);
        assert!(matches!(warp(&f, &nan), Err(Error::Value(_))));
    }

    fn frame_strategy(w: usize, h: usize) -> impl Strategy<Value = Frame> {
        proptest::collection::vec(0f32..=1.0, w * h).prop_map(move |d| Frame::new(w, h, 1, d).unwrap())
    }

    fn flow_strategy(w: usize, h: usize) -> impl Strategy<Value = FlowField> {
        (
            proptest::collection::vec(-3f32..3.0, w * h),
            proptest::collection::vec(-3f32..3.0, w * h),
        )
            .prop_map(move |(u, v)| FlowField::new(w, h, u, v).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

        #[test]
        fn linear_in_intensities(
            a in frame_strategy(6, 5),
            b in frame_strategy(6, 5),
            flow in flow_strategy(6, 5),
            alpha in 0f32..=1.0,
        ) {
            let beta = 1.0 - alpha;
            let mix: Vec<f32> = a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + beta * y).collect();
            let mix = Frame::from_clamped(6, 5, 1, mix).unwrap();
            let wm = warp(&mix, &flow).unwrap();
            let wa = warp(&a, &flow).unwrap();
            let wb = warp(&b, &flow).unwrap();
            for i in 0..30 {
                let expect = alpha * wa.image.data()[i] + beta * wb.image.data()[i];
                prop_assert!((wm.image.data()[i] - expect).abs() < 1e-5);
            }
        }

        #[test]
        fn output_within_source_taps(frame in frame_strategy(7, 4), flow in flow_strategy(7, 4)) {
            let out = warp(&frame, &flow).unwrap();
            for y in 0..4 {
                for x in 0..7 {
                    let (u, v) = flow.at(x, y);
                    let sx = (x as f64 + u as f64).clamp(0.0, 6.0);
                    let sy = (y as f64 + v as f64).clamp(0.0, 3.0);
                    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
                    let taps = [
                        frame.get(x0, y0, 0),
                        frame.get((x0 + 1).min(6), y0, 0),
                        frame.get(x0, (y0 + 1).min(3), 0),
                        frame.get((x0 + 1).min(6), (y0 + 1).min(3), 0),
                    ];
                    let lo = taps.iter().cloned().fold(f32::INFINITY, f32::min);
                    let hi = taps.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
                    let s = out.image.get(x, y, 0);
                    prop_assert!(s >= lo && s <= hi, "{s} not in [{lo}, {hi}]");
                }
            }
        }

        #[test]
        fn integer_flow_is_a_gather(
            frame in frame_strategy(6, 6),
            du in proptest::collection::vec(-2i32..=2, 36),
            dv in proptest::collection::vec(-2i32..=2, 36),
        ) {
            let flow = FlowField::new(
                6, 6,
                du.iter().map(|d| *d as f32).collect(),
                dv.iter().map(|d| *d as f32).collect(),
            ).unwrap();
            let out = warp(&frame, &flow).unwrap();
            for y in 0..6 {
                for x in 0..6 {
                    let i = y * 6 + x;
                    let sx = x as i32 + du[i];
                    let sy = y as i32 + dv[i];
                    if (0..6).contains(&sx) && (0..6).contains(&sy) {
                        prop_assert!(out.is_valid(x, y));
                        prop_assert_eq!(out.image.get(x, y, 0), frame.get(sx as usize, sy as usize, 0));
                    } else {
                        prop_assert!(!out.is_valid(x, y));
                    }
                }
            }
        }
    }
}
