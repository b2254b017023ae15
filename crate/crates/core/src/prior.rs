//! Temporal sharpness prior.
//!
//! A pixel of the centre frame is likely sharp when its aligned neighbours
//! agree with it. For each neighbour `j` the squared difference is summed
//! over a `(2r+1)²` patch and over colour channels giving `D_j(x)`, and
//!
//! ```text
//! S(x) = exp(−½ Σ_j D_j(x))
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::warp::WarpedFrame;

/// How warp taps that left the image enter the patch distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidTapPolicy {
    /// Invalid taps are omitted from the sum.
    #[default]
    Exclude,
    /// Invalid taps are compared using their edge-clamped values.
    ClampCompare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorParams {
    pub patch_radius: usize,
    pub invalid_tap_policy: InvalidTapPolicy,
}

impl Default for PriorParams {
    fn default() -> Self {
        PriorParams {
            patch_radius: 1,
            invalid_tap_policy: InvalidTapPolicy::Exclude,
        }
    }
}

/// Unnormalized patch distance between a warped neighbour and the centre.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl DistanceMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        DistanceMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

/// Per-pixel sharpness confidence in `(0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SharpnessMap {
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean over the pixels selected by `inside`.
    pub fn mean_where(&self, inside: impl Fn(usize, usize) -> bool) -> Option<f64> {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..self.height {
            for x in 0..self.width {
                if inside(x, y) {
                    sum += self.at(x, y);
                    n += 1;
                }
            }
        }
        (n > 0).then(|| sum / n as f64)
    }

    /// Writes the map as an 8-bit grayscale PNG (`round(S·255)`).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let v: Vec<f32> = self.values.iter().map(|s| *s as f32).collect();
        crate::io::save_map(&v, self.width, self.height, path)
    }
}

fn check_dims(warped: &WarpedFrame, center: &Frame) -> Result<()> {
    warped.image.ensure_same_shape(center, "patch distance")?;
    if warped.validity.len() != center.pixel_count() {
        return Err(Error::Shape("validity mask does not match frame".into()));
    }
    Ok(())
}

/// `D(x) = Σ_{y∈ω(x)} Σ_c (warped(y) − center(y))²`, with patches clipped at
/// the image border.
pub fn patch_distance(warped: &WarpedFrame, center: &Frame, params: &PriorParams) -> Result<DistanceMap> {
    check_dims(warped, center)?;
    let (w, h, ch) = (center.width(), center.height(), center.channels());
    let exclude = params.invalid_tap_policy == InvalidTapPolicy::Exclude;
    let per_pixel: Vec<f64> = (0..w * h)
        .map(|p| {
            if exclude && !warped.validity[p] {
                return 0.0;
            }
            (0..ch)
                .map(|c| {
                    let d = warped.image.data()[p * ch + c] as f64 - center.data()[p * ch + c] as f64;
                    d * d
                })
                .sum()
        })
        .collect();

    let r = params.patch_radius;
    let mut values = vec![0f64; w * h];
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(r), (y + r).min(h - 1));
        for x in 0..w {
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(w - 1));
            let mut acc = 0.0;
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    acc += per_pixel[yy * w + xx];
                }
            }
            values[y * w + x] = acc;
        }
    }
    Ok(DistanceMap {
        width: w,
        height: h,
        values,
    })
}

/// `S(x) = exp(−½ Σ_j D_j(x))` over any number of neighbour distances.
pub fn sharpness_from_distances(width: usize, height: usize, distances: &[&DistanceMap]) -> Result<SharpnessMap> {
    for d in distances {
        if d.width != width || d.height != height {
            return Err(Error::Shape(format!(
                "distance map {}x{} vs {width}x{height}",
                d.width, d.height
            )));
        }
    }
    let values = (0..width * height)
        .map(|p| {
            let total: f64 = distances.iter().map(|d| d.values[p]).sum();
            (-0.5 * total).exp().max(f64::MIN_POSITIVE)
        })
        .collect();
    Ok(SharpnessMap { width, height, values })
}

/// Sharpness of `center` given its two warped temporal neighbours.
pub fn compute_sharpness_map(
    center: &Frame,
    warped_prev: &WarpedFrame,
    warped_next: &WarpedFrame,
    params: &PriorParams,
) -> Result<SharpnessMap> {
    let dp = patch_distance(warped_prev, center, params)?;
    let dn = patch_distance(warped_next, center, params)?;
    sharpness_from_distances(center.width(), center.height(), &[&dp, &dn])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grey(w: usize, h: usize, v: f32) -> Frame {
        Frame::filled(w, h, 1, v).unwrap()
    }

    fn radius(r: usize) -> PriorParams {
        PriorParams {
            patch_radius: r,
            ..Default::default()
        }
    }

    #[test]
    fn identical_frames_have_zero_distance_and_unit_sharpness() {
        let f = Frame::from_fn(9, 7, |x, y| ((x * 7 + y * 3) % 11) as f32 / 11.0).unwrap();
        let w = WarpedFrame::aligned(f.clone());
        let d = patch_distance(&w, &f, &PriorParams::default()).unwrap();
        assert!(d.values.iter().all(|v| *v == 0.0));
        let s = compute_sharpness_map(&f, &w, &w, &PriorParams::default()).unwrap();
        assert!(s.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn single_pixel_distance() {
        let d = patch_distance(&WarpedFrame::aligned(grey(1, 1, 1.0)), &grey(1, 1, 0.0), &radius(0)).unwrap();
        assert_eq!(d.values, vec![1.0]);
    }

    #[test]
    fn three_by_three_patch_sums_nine_terms() {
        let center = grey(5, 5, 0.3);
        let warped = WarpedFrame::aligned(grey(5, 5, 0.4));
        let d = patch_distance(&warped, &center, &radius(1)).unwrap();
        // 0.4f32 - 0.3f32 is not exactly 0.1
        let diff = 0.4f32 as f64 - 0.3f32 as f64;
        assert!((d.at(2, 2) - 9.0 * diff * diff).abs() < 1e-12);
        assert!((d.at(2, 2) - 0.09).abs() < 1e-6);
        // corner patch is clipped to 2x2
        assert!((d.at(0, 0) - 4.0 * diff * diff).abs() < 1e-12);
    }

    #[test]
    fn colour_channels_are_summed() {
        let center = Frame::filled(1, 1, 3, 0.0).unwrap();
        let warped = WarpedFrame::aligned(Frame::new(1, 1, 3, vec![1.0, 0.5, 0.0]).unwrap());
        let d = patch_distance(&warped, &center, &radius(0)).unwrap();
        assert!((d.values[0] - 1.25).abs() < 1e-12);
    }

    #[test]
    fn unit_mismatch_gives_inverse_e() {
        let center = grey(1, 1, 0.0);
        let w = WarpedFrame::aligned(grey(1, 1, 1.0));
        let s = compute_sharpness_map(&center, &w, &w, &radius(0)).unwrap();
        assert!((s.values[0] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((s.values[0] - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn one_sided_mismatch() {
        let dn = DistanceMap { width: 1, height: 1, values: vec![0.09] };
        let dp = DistanceMap::zeros(1, 1);
        let s = sharpness_from_distances(1, 1, &[&dp, &dn]).unwrap();
        assert!((s.values[0] - 0.95600).abs() < 1e-5);
    }

    #[test]
    fn invalid_taps_policy() {
        let center = grey(3, 1, 0.0);
        let mut w = WarpedFrame::aligned(grey(3, 1, 1.0));
        w.validity[2] = false;
        let ex = patch_distance(&w, &center, &radius(0)).unwrap();
        assert_eq!(ex.values, vec![1.0, 1.0, 0.0]);
        let cc = patch_distance(
            &w,
            &center,
            &PriorParams {
                patch_radius: 0,
                invalid_tap_policy: InvalidTapPolicy::ClampCompare,
            },
        )
        .unwrap();
        assert_eq!(cc.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn shape_mismatch() {
        let w = WarpedFrame::aligned(grey(3, 3, 0.5));
        assert!(matches!(
            patch_distance(&w, &grey(3, 2, 0.5), &PriorParams::default()),
            Err(Error::Shape(_))
        ));
    }

    fn frame6(vals: Vec<f32>) -> Frame {
        Frame::new(6, 6, 1, vals).unwrap()
    }

    fn samples() -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(0f32..=1.0, 36)
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 128, ..ProptestConfig::default() })]

        #[test]
        fn range_and_symmetry(c in samples(), p in samples(), n in samples(), r in 0usize..3) {
            let c = frame6(c);
            let wp = WarpedFrame::aligned(frame6(p));
            let wn = WarpedFrame::aligned(frame6(n));
            let s1 = compute_sharpness_map(&c, &wp, &wn, &radius(r)).unwrap();
            let s2 = compute_sharpness_map(&c, &wn, &wp, &radius(r)).unwrap();
            for (a, b) in s1.values.iter().zip(&s2.values) {
                prop_assert!(*a > 0.0 && *a <= 1.0);
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn unit_only_when_both_distances_vanish(c in samples(), p in samples(), r in 0usize..2) {
            let c = frame6(c);
            let wp = WarpedFrame::aligned(frame6(p));
            let wc = WarpedFrame::aligned(c.clone());
            let dp = patch_distance(&wp, &c, &radius(r)).unwrap();
            let s = compute_sharpness_map(&c, &wp, &wc, &radius(r)).unwrap();
            for (sv, dv) in s.values.iter().zip(&dp.values) {
                prop_assert_eq!(*sv == 1.0, *dv == 0.0 || *dv < 1e-15);
            }
        }

        #[test]
        fn larger_mismatch_never_raises_sharpness(
            c in samples(),
            p in samples(),
            grow in proptest::collection::vec(0f32..=1.0, 36),
            r in 0usize..3,
        ) {
            let c = frame6(c);
            let p = frame6(p);
            // push every warped sample further from the centre
            let q: Vec<f32> = c.data().iter().zip(p.data()).zip(&grow).map(|((cv, pv), g)| {
                let d = pv - cv;
                let target = cv + d + d.signum() * g;
                if d == 0.0 { *pv } else { target.clamp(0.0, 1.0) }
            }).collect();
            let q = frame6(q);
            let same = WarpedFrame::aligned(c.clone());
            let s_small = compute_sharpness_map(&c, &WarpedFrame::aligned(p), &same, &radius(r)).unwrap();
            let s_big = compute_sharpness_map(&c, &WarpedFrame::aligned(q), &same, &radius(r)).unwrap();
            for (a, b) in s_small.values.iter().zip(&s_big.values) {
                prop_assert!(b <= a);
            }
        }
    }
}
