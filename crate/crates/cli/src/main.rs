//! `deblur` — command-line front end for the deblurring engine.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit status for usage and configuration errors (clap uses the same).
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "deblur", version, about = "Training-free cascaded video deblurring")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Deblur a frame sequence with the cascade.
    Deblur(DeblurArgs),
    /// Synthesize blurred frames from a sharp sequence.
    Synth(SynthArgs),
    /// Estimate optical flow between two images.
    Flow(FlowArgs),
    /// Render the sharpness map of a frame given its two neighbours.
    Prior(PriorArgs),
    /// Score a predicted sequence against ground truth.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct DeblurArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Frame file name pattern, e.g. `%06d.png`.
    #[arg(long, default_value = deblur_core::io::DEFAULT_PATTERN)]
    pattern: String,
    /// TOML configuration; flags given here override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    stages: Option<usize>,
    /// `average`, `fusion` or `external`.
    #[arg(long)]
    restorer: Option<String>,
    #[arg(long)]
    window_radius: Option<usize>,
    /// Executable for the external restorer.
    #[arg(long)]
    external_model: Option<PathBuf>,
    /// Start each stage's flow from the previous stage's estimate.
    #[arg(long)]
    warm_start: bool,
    /// Write per-stage traces as JSON to this file.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Write the latents after every stage to `DIR/stage_N/`.
    #[arg(long)]
    dump_stages: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "texture_seed"]))]
struct SynthArgs {
    /// Directory of sharp frames.
    #[arg(long, short)]
    input: Option<PathBuf>,
    /// Generate a translating texture sequence from this seed instead.
    #[arg(long)]
    texture_seed: Option<u64>,
    #[arg(long, default_value_t = 7, requires = "texture_seed")]
    frames: usize,
    /// `WIDTHxHEIGHT` of generated frames.
    #[arg(long, default_value = "96x96", requires = "texture_seed")]
    size: String,
    /// `VX,VY` in pixels per frame for generated frames.
    #[arg(long, default_value = "2,0", requires = "texture_seed", allow_hyphen_values = true)]
    velocity: String,
    #[arg(long, short)]
    output: PathBuf,
    /// Blur taps per side; at least 1.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    tau: u32,
    /// `all`, or `;`-separated `FRAME` / `FRAME@X,Y,W,H` entries.
    #[arg(long, default_value = "all")]
    schedule: String,
    #[arg(long, default_value = deblur_core::io::DEFAULT_PATTERN)]
    pattern: String,
    /// TOML configuration whose `[flow]` table is used when flows are estimated.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FlowArgs {
    /// Reference image `a`; the flow satisfies `a(x) ≈ b(x + u)`.
    a: PathBuf,
    b: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Also write the flow of every pyramid level into this directory.
    #[arg(long)]
    levels: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PriorArgs {
    prev: PathBuf,
    center: PathBuf,
    next: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    /// Use these flows (neighbour onto centre) instead of estimating them.
    #[arg(long, requires = "flow_next")]
    flow_prev: Option<PathBuf>,
    #[arg(long, requires = "flow_prev")]
    flow_next: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = deblur_core::io::DEFAULT_PATTERN)]
    pattern: String,
    /// Write the JSON report here as well as printing a summary.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.downcast_ref::<deblur_core::Error>().is_some_and(|e| e.is_config())
            || e.downcast_ref::<commands::UsageError>().is_some()
    });
    if usage {
        EXIT_USAGE
    } else {
        EXIT_RUNTIME
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    let result = match cli.command {
        Command::Deblur(a) => commands::deblur(a),
        Command::Synth(a) => commands::synth(a),
        Command::Flow(a) => commands::flow(a),
        Command::Prior(a) => commands::prior(a),
        Command::Eval(a) => commands::eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
