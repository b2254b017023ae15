//! PSNR / SSIM and sequence-level evaluation reports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frame::Frame;
use crate::io::{list_sequence, load_frame, FramePattern};

/// Reported PSNR when the two frames are identical.
pub const PSNR_IDENTICAL_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

pub fn mse(a: &Frame, b: &Frame) -> Result<f64> {
    a.ensure_same_shape(b, "mse")?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10·log10(peak² / MSE)` over every sample; identical inputs give
/// [`PSNR_IDENTICAL_DB`].
pub fn psnr(a: &Frame, b: &Frame, peak: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_IDENTICAL_DB);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in g.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = g.iter().sum();
    g.map(|v| v / s)
}

/// Separable Gaussian filtering keeping only positions where the whole
/// window fits.
fn filter_valid(img: &[f64], w: usize, h: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = g.iter().enumerate().map(|(k, c)| c * img[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = g.iter().enumerate().map(|(k, c)| c * tmp[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean SSIM on luma with an 11×11 Gaussian window (σ = 1.5), K1 = 0.01,
/// K2 = 0.03 and a dynamic range of 1. Only windows fully inside the image
/// are averaged.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::Shape(format!(
            "ssim: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Size(format!("ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}")));
    }
    let x: Vec<f64> = a.to_luma().data().iter().map(|v| *v as f64).collect();
    let y: Vec<f64> = b.to_luma().data().iter().map(|v| *v as f64).collect();
    let g = gaussian_window();
    let mu_x = filter_valid(&x, w, h, &g);
    let mu_y = filter_valid(&y, w, h, &g);
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(u, v)| u * v).collect::<Vec<_>>();
    let e_xx = filter_valid(&prod(&x, &x), w, h, &g);
    let e_yy = filter_valid(&prod(&y, &y), w, h, &g);
    let e_xy = filter_valid(&prod(&x, &y), w, h, &g);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = mu_x.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let vx = e_xx[i] - mx * mx;
            let vy = e_yy[i] - my * my;
            let cxy = e_xy[i] - mx * my;
            ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub index: usize,
    pub file: String,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pred_dir: String,
    pub gt_dir: String,
    pub pattern: String,
    pub peak: f64,
    pub count: usize,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub frames: Vec<FrameScore>,
}

impl EvalReport {
    /// Scores already-loaded frame pairs.
    pub fn from_frames(pred: &[Frame], gt: &[Frame], names: &[String]) -> Result<Self> {
        if pred.len() != gt.len() {
            return Err(Error::Pairing(format!(
                "{} predicted frames vs {} ground-truth frames",
                pred.len(),
                gt.len()
            )));
        }
        if pred.is_empty() {
            return Err(Error::Pairing("no frames to evaluate".into()));
        }
        use rayon::prelude::*;
        let frames = pred
            .par_iter()
            .zip(gt)
            .enumerate()
            .map(|(index, (p, g))| {
                Ok(FrameScore {
                    index,
                    file: names.get(index).cloned().unwrap_or_default(),
                    psnr: psnr(p, g, 1.0)?,
                    ssim: ssim(p, g)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = frames.len() as f64;
        Ok(EvalReport {
            pred_dir: String::new(),
            gt_dir: String::new(),
            pattern: String::new(),
            peak: 1.0,
            count: frames.len(),
            mean_psnr: frames.iter().map(|f| f.psnr).sum::<f64>() / n,
            mean_ssim: frames.iter().map(|f| f.ssim).sum::<f64>() / n,
            frames,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format {
            path: "<report>".into(),
            reason: e.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Format { reason, .. } => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}

/// Pairs frames of two directories by position in index order and scores
/// each pair.
pub fn evaluate_sequence(pred_dir: &Path, gt_dir: &Path, pattern: &FramePattern) -> Result<EvalReport> {
    let pred_paths = list_sequence(pred_dir, pattern)?;
    let gt_paths = list_sequence(gt_dir, pattern)?;
    if pred_paths.len() != gt_paths.len() {
        return Err(Error::Pairing(format!(
            "{} frames in {} vs {} in {}",
            pred_paths.len(),
            pred_dir.display(),
            gt_paths.len(),
            gt_dir.display()
        )));
    }
    let pred = pred_paths.iter().map(|p| load_frame(p)).collect::<Result<Vec<_>>>()?;
    let gt = gt_paths.iter().map(|p| load_frame(p)).collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = gt_paths
        .iter()
        .map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let mut report = EvalReport::from_frames(&pred, &gt, &names)?;
    report.pred_dir = pred_dir.display().to_string();
    report.gt_dir = gt_dir.display().to_string();
    report.pattern = pattern.as_str().to_string();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{Texture, TextureParams};
    use proptest::prelude::*;

    fn tex(seed: u64, w: usize, h: usize) -> Frame {
        Texture::random(seed, &TextureParams::default()).render(w, h, 0.0, 0.0).unwrap()
    }

    #[test]
    fn psnr_cases() {
        let z = Frame::filled(8, 8, 1, 0.0).unwrap();
        let o = Frame::filled(8, 8, 1, 1.0).unwrap();
        assert_eq!(psnr(&z, &z, 1.0).unwrap(), 100.0);
        assert!((psnr(&z, &o, 1.0).unwrap() - 0.0).abs() < 1e-12);
        let a = Frame::filled(8, 8, 3, 0.5).unwrap();
        let b = Frame::filled(8, 8, 3, 0.5 + 16.0 / 255.0).unwrap();
        let expect = 20.0 * (255.0f64 / 16.0).log10();
        assert!((psnr(&a, &b, 1.0).unwrap() - expect).abs() < 1e-4);
        assert!((expect - 24.05).abs() < 0.01);
        assert!(matches!(psnr(&z, &a, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_identity_and_constants() {
        let a = tex(1, 32, 24);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        let p = Frame::filled(16, 16, 1, 0.4).unwrap();
        let q = Frame::filled(16, 16, 1, 0.6).unwrap();
        let (x, y) = (0.4f32 as f64, 0.6f32 as f64);
        let expect = (2.0 * x * y + 1e-4) / (x * x + y * y + 1e-4);
        assert!((ssim(&p, &q).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ssim_of_inverted_texture_is_low() {
        let a = tex(2, 40, 40);
        let inv: Vec<f32> = a.data().iter().map(|v| 1.0 - v).collect();
        let b = Frame::new(40, 40, 1, inv).unwrap();
        assert!(ssim(&a, &b).unwrap() < 0.2);
    }

    #[test]
    fn ssim_errors() {
        let a = Frame::filled(10, 20, 1, 0.5).unwrap();
        assert!(matches!(ssim(&a, &a), Err(Error::Size(_))));
        let b = Frame::filled(12, 12, 1, 0.5).unwrap();
        let c = Frame::filled(12, 13, 1, 0.5).unwrap();
        assert!(matches!(ssim(&b, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn report_means_and_round_trip() {
        let gt: Vec<Frame> = (0..3).map(|s| tex(s, 16, 16)).collect();
        let pred: Vec<Frame> = gt
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let d: Vec<f32> = f.data().iter().map(|v| (v + 0.01 * i as f32).min(1.0)).collect();
                Frame::new(16, 16, 1, d).unwrap()
            })
            .collect();
        let r = EvalReport::from_frames(&pred, &gt, &[]).unwrap();
        let mp = r.frames.iter().map(|f| f.psnr).sum::<f64>() / 3.0;
        let ms = r.frames.iter().map(|f| f.ssim).sum::<f64>() / 3.0;
        assert_eq!(r.mean_psnr, mp);
        assert_eq!(r.mean_ssim, ms);
        assert_eq!(r.frames[0].psnr, 100.0);
        assert_eq!(EvalReport::from_json(&r.to_json()).unwrap(), r);
        assert!(matches!(
            EvalReport::from_frames(&pred[..2], &gt, &[]),
            Err(Error::Pairing(_))
        ));
    }

    #[test]
    fn evaluate_directories() {
        let dir = tempfile::tempdir().unwrap();
        let (p, g) = (dir.path().join("pred"), dir.path().join("gt"));
        let pattern = FramePattern::default();
        let frames: Vec<Frame> = (0..3).map(|s| tex(s, 16, 16)).collect();
        crate::io::save_sequence(&frames, &p, &pattern).unwrap();
        crate::io::save_sequence(&frames, &g, &pattern).unwrap();
        let r = evaluate_sequence(&p, &g, &pattern).unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(r.mean_psnr, 100.0);
        assert!((r.mean_ssim - 1.0).abs() < 1e-9);
        assert_eq!(r.frames[2].file, "000002.png");

        std::fs::remove_file(g.join("000002.png")).unwrap();
        assert!(matches!(evaluate_sequence(&p, &g, &pattern), Err(Error::Pairing(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

        #[test]
        fn symmetric(s1 in 0u64..1000, s2 in 0u64..1000) {
            let a = tex(s1, 16, 16);
            let b = tex(s2, 16, 16);
            prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
            prop_assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
            let s = ssim(&a, &b).unwrap();
            prop_assert!(s <= 1.0 + 1e-12);
            if a != b {
                prop_assert!(s < 1.0 - 1e-9);
            }
        }

        #[test]
        fn psnr_decreases_with_noise(seed in 0u64..1000, amp in 0.01f32..0.2) {
            // keep samples away from the clamp so the amplitude really grows
            let a_mid: Vec<f32> = tex(seed, 16, 16).data().iter().map(|v| 0.3 + 0.4 * v).collect();
            let a = Frame::new(16, 16, 1, a_mid).unwrap();
            let with = |k: f32| {
                let d: Vec<f32> = a.data().iter().enumerate()
                    .map(|(i, v)| v + k * if i % 2 == 0 { 1.0 } else { -1.0 })
                    .collect();
                Frame::new(16, 16, 1, d).unwrap()
            };
            let p1 = psnr(&a, &with(amp), 1.0).unwrap();
            let p2 = psnr(&a, &with(amp * 1.5), 1.0).unwrap();
            prop_assert!(p2 < p1);
        }
    }
}
