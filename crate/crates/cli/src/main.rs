//! `lfdiff`: dataset generation, training, enhancement, evaluation and the
//! invariant suite.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error
//! (missing or malformed files), 3 numeric failure (non-finite values or a
//! failed self-test).

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lfdiff::pipeline::JumpKernel;
use lfdiff::watersim::WaterPreset;

#[derive(Debug, Parser)]
#[command(name = "lfdiff", version, about = "Few-step diffusion enhancement of underwater light fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render paired clean/degraded synthetic scenes and a manifest.
    GenData(GenDataArgs),
    /// Train the adapters and noise-map predictor on a generated dataset.
    Train(TrainArgs),
    /// Enhance one degraded light field with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Score every prediction in a directory against its reference.
    Eval(EvalArgs),
    /// Train or sample the full-length conditional DDPM baseline.
    BaselineDdpm(BaselineArgs),
    /// Run the invariant and oracle suite.
    Selftest,
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long)]
    scenes: usize,
    /// angular and spatial size `u,v,h,w`
    #[arg(long, value_parser = parse_dims)]
    dims: [usize; 4],
    #[arg(long, value_parser = parse_water, default_value = "greenish")]
    water: WaterPreset,
    #[arg(long)]
    out: PathBuf,
    /// scene `i` uses seed `seed + i`
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// training configuration JSON; defaults apply to missing fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// model configuration JSON
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// per-iteration loss CSV
    #[arg(long)]
    log: Option<PathBuf>,
    /// overrides the training and initialization seeds
    #[arg(long)]
    seed: Option<u64>,
    /// overrides the total iteration count
    #[arg(long)]
    iters: Option<usize>,
    /// continue from a checkpoint instead of a fresh network
    #[arg(long)]
    resume: Option<PathBuf>,
    /// also write the checkpoint every N iterations
    #[arg(long)]
    save_every: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KernelArg {
    Posterior,
    SourceStep,
}

impl From<KernelArg> for JumpKernel {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Posterior => JumpKernel::Posterior,
            KernelArg::SourceStep => JumpKernel::SourceStep,
        }
    }
}

#[derive(Debug, Args)]
struct EnhanceArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// also write a `u × v` PNG montage of the result
    #[arg(long)]
    png_grid: Option<PathBuf>,
    /// strictly decreasing comma-separated steps
    #[arg(long, value_parser = parse_steps, default_value = "500,400,300,200,100")]
    steps: Steps,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "posterior")]
    kernel: KernelArg,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// directory of enhanced `.lf4d` files
    #[arg(long)]
    pred: PathBuf,
    /// directory of same-named references, or a generated dataset
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// optional per-view CSV
    #[arg(long)]
    views: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineMode {
    Train,
    Sample,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    mode: BaselineMode,
    /// training: dataset directory
    #[arg(long)]
    data: Option<PathBuf>,
    /// training: configuration JSON (lr, crop, seed are used)
    #[arg(long)]
    config: Option<PathBuf>,
    /// training: model configuration JSON
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// training: per-iteration loss CSV
    #[arg(long)]
    log: Option<PathBuf>,
    /// sampling: checkpoint
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// sampling: degraded input
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// checkpoint (training) or enhanced light field (sampling)
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_list(s: &str) -> Result<Vec<usize>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

/// A strictly decreasing step list parsed from one comma-separated value.
#[derive(Debug, Clone)]
pub struct Steps(pub Vec<usize>);

fn parse_steps(s: &str) -> Result<Steps, String> {
    let steps = parse_list(s)?;
    if steps.windows(2).any(|w| w[0] <= w[1]) {
        return Err("steps must be strictly decreasing".into());
    }
    Ok(Steps(steps))
}

fn parse_dims(s: &str) -> Result<[usize; 4], String> {
    parse_list(s)?.try_into().map_err(|v: Vec<usize>| format!("expected u,v,h,w, got {} values", v.len()))
}

fn parse_water(s: &str) -> Result<WaterPreset, String> {
    s.parse().map_err(|e: lfdiff::Error| e.to_string())
}

/// A failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<lfdiff::Error> for Failure {
    fn from(e: lfdiff::Error) -> Self {
        match e {
            lfdiff::Error::NonFinite(_) => Failure::Numeric(e.to_string()),
            lfdiff::Error::Config(_) => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Train(a) => commands::train(a),
        Command::Enhance(a) => commands::enhance(a),
        Command::Eval(a) => commands::eval(a),
        Command::BaselineDdpm(a) => commands::baseline(a),
        Command::Selftest => commands::selftest(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
