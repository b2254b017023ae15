use std::fmt;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use deblur_core::blur::{synthesize_sequence, BlurSchedule, SequenceFlows, SynthManifest};
use deblur_core::flow::estimate_flow_levels;
use deblur_core::io::{
    list_sequence, load_frame, load_sequence, read_flow, save_frame, save_sequence, write_flow, FramePattern,
};
use deblur_core::metrics::{evaluate_sequence, EvalReport};
use deblur_core::prior::compute_sharpness_map;
use deblur_core::synthetic::{translating_sequence, Texture, TextureParams};
use deblur_core::{estimate_flow, warp, Cascade, CascadeConfig, FlowField};

use crate::{DeblurArgs, EvalArgs, FlowArgs, PriorArgs, SynthArgs};

/// Malformed argument values that clap cannot check on its own.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_config(path: Option<&Path>) -> Result<CascadeConfig> {
    let cfg = read_config(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Unvalidated, so command-line overrides can fix values before checking.
fn read_config(path: Option<&Path>) -> Result<CascadeConfig> {
    Ok(match path {
        Some(p) => CascadeConfig::read(p)?,
        None => CascadeConfig::default(),
    })
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        anyhow::bail!("{what} directory {} does not exist", path.display());
    }
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn deblur(args: DeblurArgs) -> Result<()> {
    let mut cfg = read_config(args.config.as_deref())?;
    if let Some(s) = args.stages {
        cfg.stages = s;
    }
    if let Some(r) = args.restorer {
        cfg.restorer = r;
    }
    if let Some(j) = args.window_radius {
        cfg.window_radius = j;
    }
    if let Some(m) = args.external_model {
        cfg.external_model = Some(m);
    }
    cfg.warm_start |= args.warm_start;
    cfg.validate()?;
    let pattern = FramePattern::parse(&args.pattern)?;

    require_dir(&args.input, "input")?;
    let paths = list_sequence(&args.input, &pattern)?;
    let frames = load_sequence(&args.input, &pattern)?;
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;

    if cfg.stages == 0 {
        // passthrough keeps the original files untouched
        for p in &paths {
            fs::copy(p, args.output.join(file_name(p))).with_context(|| format!("copying {}", p.display()))?;
        }
        eprintln!("0 stages: copied {} frames", paths.len());
        return Ok(());
    }

    let cascade = Cascade::new(cfg.clone())?.keep_intermediate(args.dump_stages.is_some());
    let out = cascade.run(&frames)?;
    for t in &out.traces {
        let mean_s = t.frames.iter().map(|f| f.mean_sharpness).sum::<f64>() / t.frames.len() as f64;
        eprintln!(
            "stage {}/{}: {:.1} ms ({}), mean sharpness {mean_s:.4}",
            t.stage, cfg.stages, t.elapsed_ms, t.restorer
        );
    }
    for (p, f) in paths.iter().zip(&out.frames) {
        save_frame(f, &args.output.join(file_name(p)))?;
    }
    if let Some(dir) = &args.dump_stages {
        for (k, stage) in out.intermediate.iter().enumerate() {
            let d = dir.join(format!("stage_{}", k + 1));
            fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
            for (p, f) in paths.iter().zip(stage) {
                save_frame(f, &d.join(file_name(p)))?;
            }
        }
    }
    if let Some(path) = &args.diagnostics {
        let json = serde_json::to_string_pretty(&out.traces)?;
        fs::write(path, json).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn parse_pair<T: std::str::FromStr>(text: &str, sep: char, what: &str) -> Result<(T, T)> {
    let bad = || usage(format!("bad {what} `{text}`"));
    let (a, b) = text.split_once(sep).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

pub fn synth(args: SynthArgs) -> Result<()> {
    let tau = args.tau as usize;
    let schedule = BlurSchedule::parse(&args.schedule)?;
    let pattern = FramePattern::parse(&args.pattern)?;
    let flow_params = load_config(args.config.as_deref())?.flow;

    let (sharp, flows, source, flow_source) = match (&args.input, args.texture_seed) {
        (Some(dir), _) => {
            require_dir(dir, "input")?;
            let frames = load_sequence(dir, &pattern)?;
            (frames, None, dir.display().to_string(), "estimated")
        }
        (None, Some(seed)) => {
            let (w, h): (usize, usize) = parse_pair(&args.size, 'x', "size")?;
            let velocity: (f64, f64) = parse_pair(&args.velocity, ',', "velocity")?;
            if w == 0 || h == 0 {
                return Err(usage("size must be positive"));
            }
            let tex = Texture::random(seed, &TextureParams::default());
            let frames = translating_sequence(&tex, w, h, args.frames, velocity)?;
            let flows = SequenceFlows::translation(w, h, args.frames, velocity);
            let source = format!("texture seed {seed}, {w}x{h}, velocity ({}, {})", velocity.0, velocity.1);
            (frames, Some(flows), source, "analytic")
        }
        (None, None) => unreachable!("clap requires a source"),
    };

    let synth = synthesize_sequence(&sharp, flows, &flow_params, tau, &schedule)?;
    fs::create_dir_all(&args.output).with_context(|| format!("creating {}", args.output.display()))?;
    let blurred_files: Vec<String> = save_sequence(&synth.blurred, &args.output, &pattern)?
        .iter()
        .map(|p| file_name(p))
        .collect();
    if args.input.is_none() {
        save_sequence(&sharp, &args.output.join("sharp"), &pattern)?;
    }
    let write_flows = |list: &[Option<FlowField>], prefix: &str| -> Result<Vec<Option<String>>> {
        list.iter()
            .enumerate()
            .map(|(i, f)| {
                f.as_ref()
                    .map(|f| {
                        let name = format!("{prefix}_{i:06}.flo");
                        write_flow(f, &args.output.join(&name))?;
                        Ok(name)
                    })
                    .transpose()
            })
            .collect()
    };
    let forward_flow_files = write_flows(&synth.flows.forward, "forward")?;
    let backward_flow_files = write_flows(&synth.flows.backward, "backward")?;

    let manifest = SynthManifest {
        tau,
        schedule_text: args.schedule.clone(),
        schedule,
        frames: sharp.len(),
        width: sharp[0].width(),
        height: sharp[0].height(),
        source,
        flow_source: flow_source.into(),
        blurred_files,
        forward_flow_files,
        backward_flow_files,
        flow_params,
    };
    manifest.write(&args.output.join("manifest.json"))?;
    eprintln!("wrote {} blurred frames to {}", sharp.len(), args.output.display());
    Ok(())
}

pub fn flow(args: FlowArgs) -> Result<()> {
    let params = load_config(args.config.as_deref())?.flow;
    let a = load_frame(&args.a)?;
    let b = load_frame(&args.b)?;
    let mut levels = estimate_flow_levels(&a, &b, &params, None)?;
    if let Some(dir) = &args.levels {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let n = levels.len();
        for (k, f) in levels.iter().enumerate() {
            // level 0 is full resolution
            write_flow(f, &dir.join(format!("level_{}.flo", n - 1 - k)))?;
        }
    }
    let flow = levels.pop().expect("at least one level");
    write_flow(&flow, &args.output)?;
    let (u, v) = flow.mean();
    eprintln!("mean flow ({u:.4}, {v:.4}), max magnitude {:.4}", flow.max_magnitude());
    Ok(())
}

pub fn prior(args: PriorArgs) -> Result<()> {
    let cfg = load_config(args.config.as_deref())?;
    let prev = load_frame(&args.prev)?;
    let center = load_frame(&args.center)?;
    let next = load_frame(&args.next)?;
    let (fp, fnx) = match (&args.flow_prev, &args.flow_next) {
        (Some(p), Some(n)) => (read_flow(p)?, read_flow(n)?),
        _ => (
            estimate_flow(&center, &prev, &cfg.flow)?,
            estimate_flow(&center, &next, &cfg.flow)?,
        ),
    };
    let wp = warp(&prev, &fp)?;
    let wn = warp(&next, &fnx)?;
    let s = compute_sharpness_map(&center, &wp, &wn, &cfg.prior)?;
    s.save_png(&args.output)?;
    eprintln!("mean sharpness {:.4}", s.mean());
    Ok(())
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let pattern = FramePattern::parse(&args.pattern)?;
    require_dir(&args.pred, "prediction")?;
    require_dir(&args.gt, "ground-truth")?;
    let report: EvalReport = evaluate_sequence(&args.pred, &args.gt, &pattern)?;
    println!(
        "{} frames: mean PSNR {:.4} dB, mean SSIM {:.6}",
        report.count, report.mean_psnr, report.mean_ssim
    );
    if let Some(path) = &args.output {
        report.write(path)?;
    }
    Ok(())
}
