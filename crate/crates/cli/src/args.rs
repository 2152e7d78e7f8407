use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mwd_core::{StencilKind, ThreadGroupShape, WavefrontVariant};

#[derive(Parser, Debug)]
#[command(name = "mwd", version, about = "Wavefront diamond temporal blocking for 3-D stencils")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compare the blocked engine against the naive sweep, bit for bit.
    Verify(VerifyArgs),
    /// Benchmark a configuration (best of two runs) and emit records.
    Run(RunArgs),
    /// Evaluate the cache, traffic, ECM and Roofline models.
    Model(ModelArgs),
    /// Search for the fastest configuration and store it.
    Tune(TuneArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ProblemArgs {
    #[arg(long, default_value = "7pt-const", value_parser = parse_stencil)]
    pub stencil: StencilKind,
    #[arg(long, default_value_t = 32)]
    pub nx: usize,
    #[arg(long, default_value_t = 32)]
    pub ny: usize,
    #[arg(long, default_value_t = 32)]
    pub nz: usize,
    /// Time steps.
    #[arg(long, default_value_t = 8)]
    pub nt: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Thread budget; defaults to all available cores.
    #[arg(long, env = "GIRIH_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct BlockingArgs {
    /// Diamond width; defaults to 8 for radius 1 and 16 for radius 4.
    #[arg(long)]
    pub dw: Option<usize>,
    /// Wavefront tile width (z-planes per thread and step).
    #[arg(long, default_value_t = 1)]
    pub nf: usize,
    /// Thread-group shape as TxxTyxTz.
    #[arg(long, default_value = "1x1x1", value_parser = parse_shape)]
    pub tgs: ThreadGroupShape,
    #[arg(long, default_value = "relaxed", value_parser = parse_variant)]
    pub variant: WavefrontVariant,
    /// Concurrent thread groups; defaults to the thread budget divided by
    /// the group size.
    #[arg(long)]
    pub groups: Option<usize>,
}

#[derive(Args, Debug, Clone)]
pub struct MachineArgs {
    /// Built-in machine preset.
    #[arg(long, default_value = "ivybridge-e5-2660v2")]
    pub machine: String,
    /// TOML machine description; overrides --machine.
    #[arg(long)]
    pub machine_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub blocking: BlockingArgs,
    /// Sweep all stencils over the standard shape set.
    #[arg(long)]
    pub all: bool,
    /// Perturb interior cell I,J,K of the blocked result before comparing.
    #[arg(long, value_name = "I,J,K", value_parser = parse_cell)]
    pub inject_fault: Option<(usize, usize, usize)>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub blocking: BlockingArgs,
    #[command(flatten)]
    pub machine: MachineArgs,
    /// Append records to this file instead of writing to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Take D_w, N_F, shape and group count from the tuning store.
    #[arg(long)]
    pub use_tuned: bool,
    #[arg(long, default_value = "mwd-tuned.json")]
    pub tuned_file: PathBuf,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    #[arg(long, default_value = "7pt-const", value_parser = parse_stencil)]
    pub stencil: StencilKind,
    /// Interior x-extent; the leading dimension adds the halo.
    #[arg(long, default_value_t = 960)]
    pub nx: usize,
    #[arg(long)]
    pub dw: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub nf: usize,
    /// Concurrent tiles sharing the cache.
    #[arg(long, default_value_t = 1)]
    pub groups: usize,
    /// Cores for the multicore prediction; defaults to the full socket.
    #[arg(long)]
    pub threads: Option<usize>,
    #[command(flatten)]
    pub machine: MachineArgs,
    /// ECM tuple T_OL,T_nOL,T_L1L2,T_L2L3,T_L3Mem in cycles per 8 updates;
    /// defaults to the tabulated tuple for the stencil and machine.
    #[arg(long, value_name = "T,T,T,T,T", value_parser = parse_ecm)]
    pub ecm: Option<[f64; 5]>,
    /// Print all eight tabulated socket predictions.
    #[arg(long)]
    pub table12: bool,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub machine: MachineArgs,
    #[arg(long, default_value = "relaxed", value_parser = parse_variant)]
    pub variant: WavefrontVariant,
    /// Tuning store to read and update.
    #[arg(long, default_value = "mwd-tuned.json")]
    pub out: PathBuf,
    /// Re-tune even when the store already has a result.
    #[arg(long)]
    pub force: bool,
    /// List shapes and pruning counts without running kernels.
    #[arg(long)]
    pub dry_run: bool,
    /// Largest N_F tried.
    #[arg(long, default_value_t = 4)]
    pub max_nf: usize,
}

fn parse_stencil(s: &str) -> Result<StencilKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_shape(s: &str) -> Result<ThreadGroupShape, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_variant(s: &str) -> Result<WavefrontVariant, String> {
    s.parse().map_err(|e| format!("{e}"))
}

fn parse_ecm(s: &str) -> Result<[f64; 5], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{s}` is not five cycle counts")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| format!("`{s}` is not five cycle counts"))
}

fn parse_cell(s: &str) -> Result<(usize, usize, usize), String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("`{s}` is not I,J,K")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [i, j, k] => Ok((i, j, k)),
        _ => Err(format!("`{s}` is not I,J,K")),
    }
}

/// Diamond width used when none is given.
pub fn default_dw(kind: StencilKind) -> usize {
    if kind.radius() == 1 {
        8
    } else {
        16
    }
}

pub fn thread_budget(arg: Option<usize>) -> usize {
    arg.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
