//! Coarse-to-fine Horn–Schunck optical flow with incremental warping.
//!
//! `estimate_flow(a, b)` returns `u` such that `a(x) ≈ b(x + u(x))`. At every
//! pyramid level the second image is warped by the current estimate, the
//! brightness constancy term is linearized around it and the quadratic
//! Horn–Schunck energy is relaxed with Jacobi sweeps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::{FlowField, Frame};
use crate::warp::sample_clamped;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowParams {
    pub pyramid_scale: f64,
    pub min_level_dim: usize,
    pub warps_per_level: usize,
    pub solver_iters_per_warp: usize,
    /// Smoothness weight for intensities in `[0, 1]`.
    pub smoothness_alpha: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        FlowParams {
            pyramid_scale: 0.5,
            min_level_dim: 16,
            warps_per_level: 3,
            solver_iters_per_warp: 100,
            smoothness_alpha: 0.05,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return Err(Error::Config(format!(
                "pyramid_scale must lie in (0, 1), got {}",
                self.pyramid_scale
            )));
        }
        if self.min_level_dim < 4 {
            return Err(Error::Config(format!(
                "min_level_dim must be at least 4, got {}",
                self.min_level_dim
            )));
        }
        if self.warps_per_level == 0 || self.solver_iters_per_warp == 0 {
            return Err(Error::Config("flow iteration counts must be at least 1".into()));
        }
        if !(self.smoothness_alpha > 0.0 && self.smoothness_alpha.is_finite()) {
            return Err(Error::Config(format!(
                "smoothness_alpha must be positive, got {}",
                self.smoothness_alpha
            )));
        }
        Ok(())
    }
}

/// Image pyramid, finest level first.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<Frame>,
}

impl Pyramid {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.levels.iter().map(|l| (l.width(), l.height())).collect()
    }
}

const GAUSS5: [f64; 5] = [
    0.054_488_684_549_642_9,
    0.244_201_342_003_233_6,
    0.402_619_946_894_246_9,
    0.244_201_342_003_233_6,
    0.054_488_684_549_642_9,
];

/// Separable 5-tap Gaussian (σ = 1) with edge clamping.
fn gaussian_blur(data: &[f32], w: usize, h: usize) -> Vec<f32> {
    let mut tmp = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, g) in GAUSS5.iter().enumerate() {
                let xx = (x as isize + k as isize - 2).clamp(0, w as isize - 1) as usize;
                acc += g * data[y * w + xx] as f64;
            }
            tmp[y * w + x] = acc as f32;
        }
    }
    let mut out = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, g) in GAUSS5.iter().enumerate() {
                let yy = (y as isize + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += g * tmp[yy * w + x] as f64;
            }
            out[y * w + x] = acc as f32;
        }
    }
    out
}

/// Bilinear resample of a single plane; output pixel `x` samples the source
/// at `(x + 0.5) / scale - 0.5`.
fn resample(data: &[f32], w: usize, h: usize, nw: usize, nh: usize, scale: f64) -> Vec<f32> {
    let mut out = Vec::with_capacity(nw * nh);
    for y in 0..nh {
        let sy = (y as f64 + 0.5) / scale - 0.5;
        for x in 0..nw {
            let sx = (x as f64 + 0.5) / scale - 0.5;
            out.push(sample_clamped(data, w, h, 1, 0, sx, sy) as f32);
        }
    }
    out
}

fn next_dim(d: usize, scale: f64) -> usize {
    (d as f64 * scale).ceil() as usize
}

pub fn build_pyramid(luma: &Frame, params: &FlowParams) -> Result<Pyramid> {
    params.validate()?;
    if luma.channels() != 1 {
        return Err(Error::Shape(format!(
            "pyramid needs a single-channel frame, got {} channels",
            luma.channels()
        )));
    }
    if luma.width().min(luma.height()) < params.min_level_dim {
        return Err(Error::Size(format!(
            "{}x{} frame is below min_level_dim {}",
            luma.width(),
            luma.height(),
            params.min_level_dim
        )));
    }
    let mut levels = vec![luma.clone()];
    loop {
        let last = levels.last().unwrap();
        let (w, h) = (last.width(), last.height());
        let (nw, nh) = (next_dim(w, params.pyramid_scale), next_dim(h, params.pyramid_scale));
        if nw.min(nh) < params.min_level_dim || (nw, nh) == (w, h) {
            break;
        }
        let blurred = gaussian_blur(last.data(), w, h);
        let data = resample(&blurred, w, h, nw, nh, params.pyramid_scale);
        levels.push(Frame::from_clamped(nw, nh, 1, data)?);
    }
    Ok(Pyramid { levels })
}

/// Resamples `flow` onto a `nw`×`nh` grid, scaling its components by `gain`.
fn resize_flow(flow: &FlowField, nw: usize, nh: usize, scale: f64, gain: f32) -> FlowField {
    let (w, h) = (flow.width(), flow.height());
    let u = resample(flow.u(), w, h, nw, nh, scale);
    let v = resample(flow.v(), w, h, nw, nh, scale);
    FlowField::from_parts_unchecked(
        nw,
        nh,
        u.into_iter().map(|c| c * gain).collect(),
        v.into_iter().map(|c| c * gain).collect(),
    )
}

/// Central difference along x or y with edge clamping.
fn gradients(img: &[f32], w: usize, h: usize) -> (Vec<f32>, Vec<f32>) {
    let mut gx = vec![0f32; w * h];
    let mut gy = vec![0f32; w * h];
    for y in 0..h {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(h - 1);
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            gx[y * w + x] = 0.5 * (img[y * w + xr] - img[y * w + xl]);
            gy[y * w + x] = 0.5 * (img[yd * w + x] - img[yu * w + x]);
        }
    }
    (gx, gy)
}

/// One level of incremental-warping Horn–Schunck, refining `flow` in place.
fn refine_level(a: &Frame, b: &Frame, flow: &mut FlowField, params: &FlowParams) {
    let (w, h) = (a.width(), a.height());
    let alpha2 = (params.smoothness_alpha * params.smoothness_alpha) as f32;
    let (ax, ay) = gradients(a.data(), w, h);
    let (max_x, max_y) = ((w - 1) as f64, (h - 1) as f64);

    for _ in 0..params.warps_per_level {
        // warp the second image towards the first with the current estimate
        let mut bw = vec![0f32; w * h];
        let mut valid = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (u, v) = flow.at(x, y);
                let sx = x as f64 + u as f64;
                let sy = y as f64 + v as f64;
                bw[y * w + x] = sample_clamped(b.data(), w, h, 1, 0, sx, sy) as f32;
                valid[y * w + x] = (0.0..=max_x).contains(&sx) && (0.0..=max_y).contains(&sy);
            }
        }
        let (bx, by) = gradients(&bw, w, h);

        let u0 = flow.u().to_vec();
        let v0 = flow.v().to_vec();
        let mut ix = vec![0f32; w * h];
        let mut iy = vec![0f32; w * h];
        // constant part of the linearized residual: It - Ix·u0 - Iy·v0
        let mut rc = vec![0f32; w * h];
        let mut den = vec![alpha2; w * h];
        for i in 0..w * h {
            if !valid[i] {
                continue;
            }
            let gx = 0.5 * (ax[i] + bx[i]);
            let gy = 0.5 * (ay[i] + by[i]);
            let it = bw[i] - a.data()[i];
            ix[i] = gx;
            iy[i] = gy;
            rc[i] = it - gx * u0[i] - gy * v0[i];
            den[i] = alpha2 + gx * gx + gy * gy;
        }

        let mut u = u0;
        let mut v = v0;
        let mut un = vec![0f32; w * h];
        let mut vn = vec![0f32; w * h];
        for _ in 0..params.solver_iters_per_warp {
            for y in 0..h {
                let yu = y.saturating_sub(1);
                let yd = (y + 1).min(h - 1);
                for x in 0..w {
                    let xl = x.saturating_sub(1);
                    let xr = (x + 1).min(w - 1);
                    let i = y * w + x;
                    let ub = 0.25 * (u[y * w + xl] + u[y * w + xr] + u[yu * w + x] + u[yd * w + x]);
                    let vb = 0.25 * (v[y * w + xl] + v[y * w + xr] + v[yu * w + x] + v[yd * w + x]);
                    let r = (ix[i] * ub + iy[i] * vb + rc[i]) / den[i];
                    un[i] = ub - ix[i] * r;
                    vn[i] = vb - iy[i] * r;
                }
            }
            std::mem::swap(&mut u, &mut un);
            std::mem::swap(&mut v, &mut vn);
        }
        *flow = FlowField::from_parts_unchecked(w, h, u, v);
    }
}

fn check_pair(a: &Frame, b: &Frame) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "flow pair {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Flow estimate at every pyramid level, coarsest first; the last entry is
/// the full-resolution result.
pub fn estimate_flow_levels(
    a: &Frame,
    b: &Frame,
    params: &FlowParams,
    init: Option<&FlowField>,
) -> Result<Vec<FlowField>> {
    check_pair(a, b)?;
    if let Some(init) = init {
        if !init.matches_frame(a) {
            return Err(Error::Shape("initial flow does not match the frame pair".into()));
        }
    }
    let pa = build_pyramid(&a.to_luma(), params)?;
    let pb = build_pyramid(&b.to_luma(), params)?;
    let coarsest = pa.len() - 1;
    let s = params.pyramid_scale;

    let top = &pa.levels[coarsest];
    let mut flow = match init {
        Some(init) if coarsest > 0 => resize_flow(
            init,
            top.width(),
            top.height(),
            s.powi(coarsest as i32),
            s.powi(coarsest as i32) as f32,
        ),
        Some(init) => init.clone(),
        None => FlowField::zeros(top.width(), top.height()),
    };
    let mut out = Vec::with_capacity(pa.len());
    for level in (0..=coarsest).rev() {
        let (la, lb) = (&pa.levels[level], &pb.levels[level]);
        if level != coarsest {
            flow = resize_flow(&flow, la.width(), la.height(), 1.0 / s, (1.0 / s) as f32);
        }
        refine_level(la, lb, &mut flow, params);
        out.push(flow.clone());
    }
    Ok(out)
}

/// Estimates `u` with `a(x) ≈ b(x + u(x))`. Colour inputs are reduced to luma.
pub fn estimate_flow(a: &Frame, b: &Frame, params: &FlowParams) -> Result<FlowField> {
    estimate_flow_from(a, b, params, None)
}

/// As [`estimate_flow`], optionally warm-started from a full-resolution flow.
pub fn estimate_flow_from(
    a: &Frame,
    b: &Frame,
    params: &FlowParams,
    init: Option<&FlowField>,
) -> Result<FlowField> {
    let mut levels = estimate_flow_levels(a, b, params, init)?;
    Ok(levels.pop().expect("pyramid has at least one level"))
}
