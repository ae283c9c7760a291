//! `insert-nco` command line.

mod commands;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Insertion-based construction and improvement for TSP and CVRP.
#[derive(Debug, Parser)]
#[command(name = "insert-nco", version)]
pub struct Cli {
    /// Root seed for every random decision.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (overridden by INSERT_NCO_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate uniform random instances.
    Gen(GenArgs),
    /// Attach reference solutions to instances.
    Label(LabelArgs),
    /// Train a model on a labeled dataset.
    Train(TrainArgs),
    /// Construct solutions by insertion.
    Solve(SolveArgs),
    /// Improve solutions by destroy and repair.
    Improve(ImproveArgs),
    /// Compare methods against reference solutions.
    Bench(BenchArgs),
    /// Draw a solution as SVG.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    Tsp,
    Cvrp,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum, default_value_t = Problem::Tsp)]
    pub problem: Problem,
    /// Nodes (TSP) or customers (CVRP) per instance.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Vehicle capacity; defaults by size.
    #[arg(long)]
    pub capacity: Option<f64>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelMethod {
    /// Exact for TSP up to 20 nodes, local search otherwise.
    Auto,
    Exact,
    Local,
}

#[derive(Debug, Args)]
pub struct LabelArgs {
    /// Instances (JSONL, .tsp or .vrp).
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = LabelMethod::Auto)]
    pub method: LabelMethod,
    /// Perturbation rounds for local search labels.
    #[arg(long, default_value_t = 30)]
    pub restarts: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Full,
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selector {
    Nearest,
    Random,
    Polar,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Weights file to write.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Full)]
    pub preset: Preset,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub d_ff: Option<usize>,
    /// Decoder neighborhood size; 0 disables the filter.
    #[arg(long)]
    pub k: Option<usize>,
    /// Leave unvisited nodes out of the decoder input.
    #[arg(long)]
    pub no_unvisited: bool,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1024)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.97)]
    pub decay: f64,
    /// Train on this many random steps per episode.
    #[arg(long)]
    pub steps_per_episode: Option<usize>,
    #[arg(long, value_enum, default_value_t = Selector::Nearest)]
    pub selector: Selector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyKind {
    Cheapest,
    Random,
    Neural,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Decode {
    Greedy,
    Sample,
}

#[derive(Debug, Args, Clone)]
pub struct PolicyArgs {
    #[arg(long, value_enum, default_value_t = PolicyKind::Cheapest)]
    pub policy: PolicyKind,
    /// Weights for the neural policy.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Decode::Greedy)]
    pub decode: Decode,
    /// Override the model's decoder neighborhood size; 0 disables it.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, value_enum, default_value_t = Selector::Nearest)]
    pub selector: Selector,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// TSP start node; random when omitted with --random-start.
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    #[arg(long)]
    pub random_start: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DestructionKind {
    Distance,
    Sequence,
}

#[derive(Debug, Args)]
pub struct ImproveArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Starting solutions, one per instance in the same order.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 300)]
    pub alpha: usize,
    #[arg(long, value_enum, default_value_t = DestructionKind::Distance)]
    pub destruction: DestructionKind,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    /// Reference solutions, one per instance.
    #[arg(long)]
    pub reference: PathBuf,
    /// Policies to run (repeatable).
    #[arg(long = "method", value_enum)]
    pub methods: Vec<PolicyKind>,
    /// Precomputed solutions as NAME=FILE (repeatable).
    #[arg(long = "solutions")]
    pub solutions: Vec<String>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Selector::Nearest)]
    pub selector: Selector,
    /// Use nearest-integer EUC_2D lengths.
    #[arg(long)]
    pub round: bool,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub solutions: PathBuf,
    /// Which instance to draw.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

/// A flag combination that parses but makes no sense.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
