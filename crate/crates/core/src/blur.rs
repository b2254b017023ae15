//! Forward blur model: a sharp frame integrated along its bidirectional
//! motion during the exposure.
//!
//! With forward flow `u₊ = u_{i→i+1}`, backward flow `u₋ = u_{i→i−1}` and a
//! duty-cycle discretization `τ`,
//!
//! ```text
//! B(x) = [ Σ_{d=1..τ} ( I(x + (d/τ)·u₊) + I(x + (d/τ)·u₋) ) + I(x) ] / (1 + 2τ)
//! ```
//!
//! which for `τ = 1` is the three-tap average of the frame and its two
//! displaced copies.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow, FlowParams};
use crate::frame::{FlowField, Frame};
use crate::warp::warp;

fn check_flow(frame: &Frame, flow: &FlowField, what: &str) -> Result<()> {
    if flow.matches_frame(frame) {
        Ok(())
    } else {
        Err(Error::Shape(format!(
            "{what} flow {}x{} vs frame {}x{}",
            flow.width(),
            flow.height(),
            frame.width(),
            frame.height()
        )))
    }
}

/// Blur along whichever directional flows are present, normalizing by the
/// number of taps. Accumulation is in f64 so zero flow reproduces the input
/// bit for bit.
pub fn synthesize_blur_partial(
    sharp: &Frame,
    fwd: Option<&FlowField>,
    bwd: Option<&FlowField>,
    tau: usize,
) -> Result<Frame> {
    if tau == 0 {
        return Err(Error::Value("tau must be at least 1".into()));
    }
    if let Some(f) = fwd {
        check_flow(sharp, f, "forward")?;
    }
    if let Some(b) = bwd {
        check_flow(sharp, b, "backward")?;
    }
    let mut acc = vec![0f64; sharp.data().len()];
    let mut taps = 0usize;
    let add = |img: &Frame, acc: &mut Vec<f64>| {
        for (a, s) in acc.iter_mut().zip(img.data()) {
            *a += *s as f64;
        }
    };
    for d in 1..=tau {
        let frac = d as f32 / tau as f32;
        if let Some(f) = fwd {
            add(&warp(sharp, &f.scaled(frac))?.image, &mut acc);
            taps += 1;
        }
        if let Some(b) = bwd {
            add(&warp(sharp, &b.scaled(frac))?.image, &mut acc);
            taps += 1;
        }
    }
    add(sharp, &mut acc);
    taps += 1;
    let n = taps as f64;
    let data = acc.into_iter().map(|a| (a / n) as f32).collect();
    Frame::from_clamped(sharp.width(), sharp.height(), sharp.channels(), data)
}

/// Blurs `sharp` with forward flow `fwd` (`u_{i→i+1}`) and backward flow
/// `bwd` (`u_{i→i−1}`).
pub fn synthesize_blur(sharp: &Frame, fwd: &FlowField, bwd: &FlowField, tau: usize) -> Result<Frame> {
    synthesize_blur_partial(sharp, Some(fwd), Some(bwd), tau)
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// One frame to blur, optionally only inside a region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub frame: usize,
    pub region: Option<Region>,
}

/// Which frames (and which parts of them) receive blur. Frames not listed
/// are passed through untouched.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum BlurSchedule {
    #[default]
    All,
    Only(Vec<ScheduleEntry>),
}

impl BlurSchedule {
    /// Parses `all` or `;`-separated entries `i` / `i@x,y,w,h`.
    pub fn parse(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() || text.eq_ignore_ascii_case("all") {
            return Ok(BlurSchedule::All);
        }
        let bad = |what: &str| Error::Config(format!("bad schedule entry `{what}`"));
        let mut entries = Vec::new();
        for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (idx, region) = match item.split_once('@') {
                Some((i, r)) => {
                    let nums: Vec<usize> = r
                        .split(',')
                        .map(|n| n.trim().parse().map_err(|_| bad(item)))
                        .collect::<Result<_>>()?;
                    let [x, y, width, height] = nums[..] else {
                        return Err(bad(item));
                    };
                    (i, Some(Region { x, y, width, height }))
                }
                None => (item, None),
            };
            let frame = idx.trim().parse().map_err(|_| bad(item))?;
            entries.push(ScheduleEntry { frame, region });
        }
        Ok(BlurSchedule::Only(entries))
    }

    /// Regions to blur in frame `i`: `None` if the frame stays sharp,
    /// `Some(None)` for the whole frame.
    pub fn regions_for(&self, i: usize) -> Option<Vec<Option<Region>>> {
        match self {
            BlurSchedule::All => Some(vec![None]),
            BlurSchedule::Only(entries) => {
                let r: Vec<_> = entries.iter().filter(|e| e.frame == i).map(|e| e.region).collect();
                (!r.is_empty()).then_some(r)
            }
        }
    }
}

/// Forward and backward flow for every frame of a sequence. Boundary frames
/// lack one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceFlows {
    pub forward: Vec<Option<FlowField>>,
    pub backward: Vec<Option<FlowField>>,
}

impl SequenceFlows {
    /// Estimates `u_{i→i+1}` and `u_{i→i−1}` between consecutive sharp frames.
    pub fn estimate(frames: &[Frame], params: &FlowParams) -> Result<Self> {
        use rayon::prelude::*;
        let n = frames.len();
        let forward = (0..n)
            .into_par_iter()
            .map(|i| (i + 1 < n).then(|| estimate_flow(&frames[i], &frames[i + 1], params)).transpose())
            .collect::<Result<Vec<_>>>()?;
        let backward = (0..n)
            .into_par_iter()
            .map(|i| (i > 0).then(|| estimate_flow(&frames[i], &frames[i - 1], params)).transpose())
            .collect::<Result<Vec<_>>>()?;
        Ok(SequenceFlows { forward, backward })
    }

    /// Flows for a sequence translating by `velocity` pixels per frame.
    pub fn translation(width: usize, height: usize, frames: usize, velocity: (f64, f64)) -> Self {
        let fwd = crate::synthetic::translation_flow(width, height, 1, velocity);
        let bwd = crate::synthetic::translation_flow(width, height, -1, velocity);
        SequenceFlows {
            forward: (0..frames).map(|i| (i + 1 < frames).then(|| fwd.clone())).collect(),
            backward: (0..frames).map(|i| (i > 0).then(|| bwd.clone())).collect(),
        }
    }
}

/// Blurred frames plus the flows that produced them.
#[derive(Debug, Clone)]
pub struct SynthesizedSequence {
    pub blurred: Vec<Frame>,
    pub flows: SequenceFlows,
}

/// Applies the blur model to every scheduled frame of `sharp`.
///
/// `flows` is used as given when present and estimated from the sharp
/// frames otherwise.
pub fn synthesize_sequence(
    sharp: &[Frame],
    flows: Option<SequenceFlows>,
    flow_params: &FlowParams,
    tau: usize,
    schedule: &BlurSchedule,
) -> Result<SynthesizedSequence> {
    use rayon::prelude::*;
    if sharp.len() < 3 {
        return Err(Error::SequenceLength {
            need: 3,
            got: sharp.len(),
        });
    }
    if tau == 0 {
        return Err(Error::Value("tau must be at least 1".into()));
    }
    for f in &sharp[1..] {
        sharp[0].ensure_same_shape(f, "sharp sequence")?;
    }
    let flows = match flows {
        Some(f) => {
            if f.forward.len() != sharp.len() || f.backward.len() != sharp.len() {
                return Err(Error::Shape(format!(
                    "{} frames but {} forward / {} backward flows",
                    sharp.len(),
                    f.forward.len(),
                    f.backward.len()
                )));
            }
            f
        }
        None => SequenceFlows::estimate(sharp, flow_params)?,
    };
    let blurred = sharp
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let Some(regions) = schedule.regions_for(i) else {
                return Ok(frame.clone());
            };
            let fwd = flows.forward[i].as_ref();
            let bwd = flows.backward[i].as_ref();
            let full = synthesize_blur_partial(frame, fwd, bwd, tau)?;
            if regions.iter().any(Option::is_none) {
                return Ok(full);
            }
            Ok(composite(frame, &full, |x, y| {
                regions.iter().flatten().any(|r| r.contains(x, y))
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthesizedSequence { blurred, flows })
}

fn composite(base: &Frame, over: &Frame, inside: impl Fn(usize, usize) -> bool) -> Frame {
    let (w, c) = (base.width(), base.channels());
    let data = base
        .data()
        .iter()
        .zip(over.data())
        .enumerate()
        .map(|(k, (b, o))| {
            let p = k / c;
            if inside(p % w, p / w) {
                *o
            } else {
                *b
            }
        })
        .collect();
    Frame::new(base.width(), base.height(), c, data).expect("composite of valid frames")
}

/// Provenance record written next to a synthesized sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub tau: usize,
    /// Schedule exactly as given on the command line.
    pub schedule_text: String,
    pub schedule: BlurSchedule,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    /// Where the sharp frames came from.
    pub source: String,
    /// `"provided"`, `"estimated"` or `"analytic"`.
    pub flow_source: String,
    pub blurred_files: Vec<String>,
    pub forward_flow_files: Vec<Option<String>>,
    pub backward_flow_files: Vec<Option<String>>,
    pub flow_params: FlowParams,
}

impl SynthManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }
}
