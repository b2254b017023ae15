//! Synthetic evaluation suites with known sharp frames and exact flows.
//!
//! [`Suite::banded`] blurs frame `k` only inside horizontal band
//! `k mod bands`, so every scene point is sharp in some nearby frame — the
//! situation temporal fusion can exploit. [`Suite::center_region`] blurs a
//! single region of the middle frame and nothing else.

use serde::{Deserialize, Serialize};

use crate::blur::{synthesize_sequence, BlurSchedule, Region, ScheduleEntry, SequenceFlows};
use crate::cascade::OracleFlow;
use crate::error::{Error, Result};
use crate::flow::FlowParams;
use crate::frame::{FlowField, Frame};
use crate::metrics::psnr;
use crate::synthetic::{translating_sequence, translation_flow, Texture, TextureParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteParams {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub velocity: (f64, f64),
    pub tau: usize,
    pub bands: usize,
    pub texture: TextureParams,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            seed: 7,
            width: 96,
            height: 96,
            frames: 7,
            velocity: (2.0, 0.0),
            tau: 1,
            bands: 3,
            texture: TextureParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub params: SuiteParams,
    pub sharp: Vec<Frame>,
    pub blurred: Vec<Frame>,
    pub schedule: BlurSchedule,
}

impl Suite {
    fn build(params: SuiteParams, schedule: BlurSchedule) -> Result<Self> {
        let tex = Texture::random(params.seed, &params.texture);
        let sharp = translating_sequence(&tex, params.width, params.height, params.frames, params.velocity)?;
        let flows = SequenceFlows::translation(params.width, params.height, params.frames, params.velocity);
        let synth = synthesize_sequence(&sharp, Some(flows), &FlowParams::default(), params.tau, &schedule)?;
        Ok(Suite {
            params,
            sharp,
            blurred: synth.blurred,
            schedule,
        })
    }

    pub fn banded(params: SuiteParams) -> Result<Self> {
        if params.bands == 0 || params.bands > params.height {
            return Err(Error::Value(format!("{} bands for height {}", params.bands, params.height)));
        }
        let entries = (0..params.frames)
            .map(|k| {
                let b = k % params.bands;
                let y0 = b * params.height / params.bands;
                let y1 = (b + 1) * params.height / params.bands;
                ScheduleEntry {
                    frame: k,
                    region: Some(Region {
                        x: 0,
                        y: y0,
                        width: params.width,
                        height: y1 - y0,
                    }),
                }
            })
            .collect();
        Self::build(params, BlurSchedule::Only(entries))
    }

    pub fn center_region(params: SuiteParams, region: Region) -> Result<Self> {
        let entry = ScheduleEntry {
            frame: params.frames / 2,
            region: Some(region),
        };
        Self::build(params, BlurSchedule::Only(vec![entry]))
    }

    /// Exact flow between any two frames of the suite.
    pub fn flow(&self, center: usize, neighbor: usize) -> FlowField {
        translation_flow(
            self.params.width,
            self.params.height,
            neighbor as isize - center as isize,
            self.params.velocity,
        )
    }

    pub fn oracle(&self) -> OracleFlow<impl Fn(usize, usize) -> FlowField + Sync + 'static> {
        let (w, h, v) = (self.params.width, self.params.height, self.params.velocity);
        OracleFlow(move |c: usize, n: usize| translation_flow(w, h, n as isize - c as isize, v))
    }

    /// Mean PSNR of `frames` against the sharp ground truth.
    pub fn mean_psnr(&self, frames: &[Frame]) -> Result<f64> {
        if frames.len() != self.sharp.len() {
            return Err(Error::SequenceLength {
                need: self.sharp.len(),
                got: frames.len(),
            });
        }
        let mut total = 0.0;
        for (f, s) in frames.iter().zip(&self.sharp) {
            total += psnr(f, s, 1.0)?;
        }
        Ok(total / frames.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banded_frames_are_sharp_outside_their_band() {
        let s = Suite::banded(SuiteParams { width: 32, height: 30, frames: 4, ..Default::default() }).unwrap();
        for (k, (b, sh)) in s.blurred.iter().zip(&s.sharp).enumerate() {
            let band = (k % 3) * 10..(k % 3 + 1) * 10;
            for y in 0..30 {
                let same = (0..32).all(|x| b.get(x, y, 0) == sh.get(x, y, 0));
                if !band.contains(&y) {
                    assert!(same, "frame {k} row {y}");
                }
            }
            assert_ne!(b, sh);
        }
    }

    #[test]
    fn oracle_flow_aligns() {
        let s = Suite::banded(SuiteParams { width: 32, height: 32, frames: 3, ..Default::default() }).unwrap();
        let w = crate::warp::warp(&s.sharp[2], &s.flow(1, 2)).unwrap();
        for y in 0..32 {
            for x in 0..28 {
                assert!((w.image.get(x, y, 0) - s.sharp[1].get(x, y, 0)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rejects_bad_bands() {
        assert!(Suite::banded(SuiteParams { bands: 0, ..Default::default() }).is_err());
    }
}
