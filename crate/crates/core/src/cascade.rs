//! The cascaded inference loop.
//!
//! Latents start as the blurred inputs. Every stage, for each frame `i`:
//! flows from its neighbours `i±1..i±j` to `i` are estimated on the current
//! latents, the neighbours are warped onto frame `i`, the sharpness prior is
//! computed and the restorer produces the new latent. All stages share one
//! configuration, and after `T` stages output `i` depends only on inputs
//! `i−T·j ..= i+T·j`.

use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{estimate_flow_from, FlowParams};
use crate::frame::{replicate_index, FlowField, Frame};
use crate::prior::PriorParams;
use crate::restore::{restore, FusionParams, RestorationInput, Restorer, RESTORER_NAMES};
use crate::warp::{warp, WarpedFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Neighbours past either end of the sequence repeat the edge frame.
    #[default]
    Replicate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CascadeConfig {
    pub stages: usize,
    pub window_radius: usize,
    pub restorer: String,
    /// Executable used by the `external` restorer.
    pub external_model: Option<PathBuf>,
    pub boundary_policy: BoundaryPolicy,
    /// Initialize each stage's flow estimation from the previous stage.
    pub warm_start: bool,
    pub flow: FlowParams,
    pub prior: PriorParams,
    pub fusion: FusionParams,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig {
            stages: 2,
            window_radius: 1,
            restorer: "fusion".into(),
            external_model: None,
            boundary_policy: BoundaryPolicy::Replicate,
            warm_start: false,
            flow: FlowParams::default(),
            prior: PriorParams::default(),
            fusion: FusionParams::default(),
        }
    }
}

impl CascadeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_radius == 0 {
            return Err(Error::Config("window_radius must be at least 1".into()));
        }
        if !RESTORER_NAMES.contains(&self.restorer.as_str()) {
            return Err(Error::Config(format!(
                "unknown restorer `{}` (expected one of {})",
                self.restorer,
                RESTORER_NAMES.join(", ")
            )));
        }
        self.flow.validate()?;
        self.fusion.validate()
    }

    pub fn build_restorer(&self) -> Result<Restorer> {
        Restorer::from_name(&self.restorer, self.fusion, self.external_model.as_deref())
    }

    /// Neighbour offsets in processing order: `+1, −1, +2, −2, …`.
    pub fn offsets(&self) -> Vec<isize> {
        (1..=self.window_radius as isize).flat_map(|k| [k, -k]).collect()
    }
}

/// Supplies the flow that aligns a neighbour onto the centre frame, i.e.
/// `neighbor(x + f(x)) ≈ center(x)`.
pub trait FlowSource: Sync {
    fn flow(
        &self,
        center_index: usize,
        neighbor_index: usize,
        center: &Frame,
        neighbor: &Frame,
        init: Option<&FlowField>,
    ) -> Result<FlowField>;
}

/// Flow estimated from the current latents.
#[derive(Debug, Clone, Copy)]
pub struct EstimatedFlow(pub FlowParams);

impl FlowSource for EstimatedFlow {
    fn flow(&self, _: usize, _: usize, center: &Frame, neighbor: &Frame, init: Option<&FlowField>) -> Result<FlowField> {
        estimate_flow_from(center, neighbor, &self.0, init)
    }
}

/// Known flows looked up by `(center_index, neighbor_index)`; used to take
/// flow error out of restoration experiments.
pub struct OracleFlow<F>(pub F);

impl<F> FlowSource for OracleFlow<F>
where
    F: Fn(usize, usize) -> FlowField + Sync,
{
    fn flow(&self, c: usize, n: usize, _: &Frame, _: &Frame, _: Option<&FlowField>) -> Result<FlowField> {
        Ok((self.0)(c, n))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub offset: isize,
    pub source_index: usize,
    pub mean_flow: (f64, f64),
    pub valid_ratio: f64,
    pub mean_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub neighbors: Vec<NeighborRecord>,
    pub mean_sharpness: f64,
    pub flow_ms: f64,
    pub restore_ms: f64,
}

/// Diagnostics for one stage, one record per output frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: usize,
    pub restorer: String,
    pub elapsed_ms: f64,
    pub frames: Vec<FrameRecord>,
}

/// Flows used for each frame in a stage, in [`CascadeConfig::offsets`] order.
pub type StageFlows = Vec<Vec<FlowField>>;

#[derive(Debug, Clone)]
pub struct CascadeOutput {
    pub frames: Vec<Frame>,
    pub traces: Vec<StageTrace>,
    /// Latents after each stage, when requested.
    pub intermediate: Vec<Vec<Frame>>,
}

pub struct Cascade<'a> {
    config: CascadeConfig,
    restorer: Restorer,
    flow_source: Box<dyn FlowSource + 'a>,
    keep_intermediate: bool,
}

impl<'a> Cascade<'a> {
    pub fn new(config: CascadeConfig) -> Result<Self> {
        config.validate()?;
        let restorer = config.build_restorer()?;
        let flow_source = Box::new(EstimatedFlow(config.flow));
        Ok(Cascade {
            config,
            restorer,
            flow_source,
            keep_intermediate: false,
        })
    }

    pub fn with_restorer(mut self, restorer: Restorer) -> Self {
        self.restorer = restorer;
        self
    }

    pub fn with_flow_source(mut self, source: impl FlowSource + 'a) -> Self {
        self.flow_source = Box::new(source);
        self
    }

    pub fn keep_intermediate(mut self, keep: bool) -> Self {
        self.keep_intermediate = keep;
        self
    }

    pub fn config(&self) -> &CascadeConfig {
        &self.config
    }

    fn restore_frame(
        &self,
        latents: &[Frame],
        i: usize,
        init: Option<&[FlowField]>,
    ) -> Result<(Frame, Vec<FlowField>, FrameRecord)> {
        let center = &latents[i];
        let offsets = self.config.offsets();
        let t0 = Instant::now();
        let mut flows = Vec::with_capacity(offsets.len());
        let mut warped = Vec::with_capacity(offsets.len());
        let mut sources = Vec::with_capacity(offsets.len());
        for (k, &off) in offsets.iter().enumerate() {
            let n = replicate_index(i, off, latents.len());
            let (flow, w) = if n == i {
                (FlowField::zeros(center.width(), center.height()), WarpedFrame::aligned(center.clone()))
            } else {
                let init = init.and_then(|f| f.get(k));
                let flow = self.flow_source.flow(i, n, center, &latents[n], init)?;
                if !flow.matches_frame(center) {
                    return Err(Error::Shape(format!(
                        "flow {}x{} for frame {i} does not match {}x{}",
                        flow.width(),
                        flow.height(),
                        center.width(),
                        center.height()
                    )));
                }
                let w = warp(&latents[n], &flow)?;
                (flow, w)
            };
            flows.push(flow);
            warped.push((off, w));
            sources.push(n);
        }
        let flow_ms = t0.elapsed().as_secs_f64() * 1e3;

        let t1 = Instant::now();
        let input = RestorationInput::build(center.clone(), warped, &self.config.prior)?;
        let out = restore(&self.restorer, &input)?;
        let restore_ms = t1.elapsed().as_secs_f64() * 1e3;

        let neighbors = input
            .neighbors
            .iter()
            .zip(&flows)
            .zip(&sources)
            .map(|((g, f), &n)| NeighborRecord {
                offset: g.offset,
                source_index: n,
                mean_flow: f.mean(),
                valid_ratio: g.warped.valid_ratio(),
                mean_distance: g.distance.values.iter().sum::<f64>() / g.distance.values.len() as f64,
            })
            .collect();
        let record = FrameRecord {
            index: i,
            neighbors,
            mean_sharpness: input.sharpness.mean(),
            flow_ms,
            restore_ms,
        };
        Ok((out, flows, record))
    }

    /// One pass over every frame. `prev` carries the previous stage's flows
    /// for warm starts.
    pub fn run_stage(
        &self,
        latents: &[Frame],
        stage: usize,
        prev: Option<&StageFlows>,
    ) -> Result<(Vec<Frame>, StageFlows, StageTrace)> {
        if latents.is_empty() {
            return Err(Error::SequenceLength { need: 1, got: 0 });
        }
        for f in &latents[1..] {
            latents[0].ensure_same_shape(f, "cascade latents")?;
        }
        let start = Instant::now();
        let init = |i: usize| {
            if self.config.warm_start {
                prev.map(|p| p[i].as_slice())
            } else {
                None
            }
        };
        let results: Vec<_> = if self.restorer.is_parallel() {
            (0..latents.len())
                .into_par_iter()
                .map(|i| self.restore_frame(latents, i, init(i)))
                .collect::<Result<_>>()?
        } else {
            (0..latents.len())
                .map(|i| self.restore_frame(latents, i, init(i)))
                .collect::<Result<_>>()?
        };
        let mut frames = Vec::with_capacity(results.len());
        let mut flows = Vec::with_capacity(results.len());
        let mut records = Vec::with_capacity(results.len());
        for (f, fl, r) in results {
            frames.push(f);
            flows.push(fl);
            records.push(r);
        }
        let trace = StageTrace {
            stage,
            restorer: self.restorer.name().into(),
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            frames: records,
        };
        Ok((frames, flows, trace))
    }

    pub fn run(&self, blurred: &[Frame]) -> Result<CascadeOutput> {
        if blurred.is_empty() {
            return Err(Error::SequenceLength { need: 1, got: 0 });
        }
        let mut latents = blurred.to_vec();
        let mut traces = Vec::with_capacity(self.config.stages);
        let mut intermediate = Vec::new();
        let mut prev: Option<StageFlows> = None;
        for stage in 1..=self.config.stages {
            let (next, flows, trace) = self.run_stage(&latents, stage, prev.as_ref())?;
            latents = next;
            prev = Some(flows);
            traces.push(trace);
            if self.keep_intermediate {
                intermediate.push(latents.clone());
            }
        }
        Ok(CascadeOutput {
            frames: latents,
            traces,
            intermediate,
        })
    }
}

/// A single stage with the configured restorer and estimated flows.
pub fn run_stage(latents: &[Frame], config: &CascadeConfig) -> Result<Vec<Frame>> {
    let cascade = Cascade::new(config.clone())?;
    Ok(cascade.run_stage(latents, 1, None)?.0)
}

/// `config.stages` stages starting from the blurred inputs.
pub fn run_cascade(blurred: &[Frame], config: &CascadeConfig) -> Result<Vec<Frame>> {
    Ok(Cascade::new(config.clone())?.run(blurred)?.frames)
}
