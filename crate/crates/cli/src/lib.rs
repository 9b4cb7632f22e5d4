//! Command-line front end for `sslc`: bundle formats, calibration,
//! compression runs, sweeps and reports.
//!
//! The binary is a thin wrapper over [`run`], so every command can also be
//! driven from tests.

pub mod commands;
pub mod error;
pub mod formats;
pub mod pool;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sslc::lowrank::RightSketch;
use sslc::optimizer::ProjectionSchedule;

pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sslc", version, about = "Sparse plus low-rank weight compression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce activations (or a synthetic generator) to per-channel norms.
    Calibrate(CalibrateArgs),
    /// Compress every tensor of a weight bundle.
    Compress(CompressArgs),
    /// Emit loss, budget, retention, cost and reconstruction tables.
    Report(ReportArgs),
    /// Run a grid of plans and aggregate over seeds.
    Sweep(SweepArgs),
    /// Print a bundle manifest.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Activation bundle: one `samples × channels` tensor per batch.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub activations: Option<PathBuf>,
    /// Synthetic generator, e.g. `lognormal:sigma=2,seed=0,channels=4096,samples=8192`.
    #[arg(long)]
    pub synthetic: Option<String>,
    /// Tensor names to produce synthetic norms for.
    #[arg(long = "tensor", requires = "synthetic")]
    pub tensors: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SketchArg {
    Godec,
    IndependentGaussian,
}

impl From<SketchArg> for RightSketch {
    fn from(s: SketchArg) -> Self {
        match s {
            SketchArg::Godec => RightSketch::GoDec,
            SketchArg::IndependentGaussian => RightSketch::IndependentGaussian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectionArg {
    Fresh,
    Reuse,
}

impl From<ProjectionArg> for ProjectionSchedule {
    fn from(p: ProjectionArg) -> Self {
        match p {
            ProjectionArg::Fresh => ProjectionSchedule::Fresh,
            ProjectionArg::Reuse => ProjectionSchedule::Reuse,
        }
    }
}

/// Optimizer settings shared by `compress` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2)]
    pub power_iters: usize,
    /// Clamp for calibration norms.
    #[arg(long, default_value_t = sslc::matrix::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value_t = ProjectionArg::Fresh)]
    pub projection: ProjectionArg,
    #[arg(long, value_enum, default_value_t = SketchArg::Godec)]
    pub right_sketch: SketchArg,
    /// Accept every low-rank update, even when it raises the loss.
    #[arg(long)]
    pub no_safeguard: bool,
    /// Always run the full iteration count.
    #[arg(long)]
    pub no_early_stop: bool,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Fraction of parameters that remain.
    #[arg(long, default_value_t = 0.5)]
    pub remaining: f64,
    /// Low-rank rank; defaults to `round(128·min(m, n)/4096)` per tensor.
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 0.01)]
    pub preserve: f64,
    #[arg(long, default_value_t = 40)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    /// Held-out activation bundle for true reconstruction error.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// JSON with `overhead_factor` and optional reference `modules`.
    #[arg(long)]
    pub cost_calibration: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
    /// Samples on the retention curve.
    #[arg(long, default_value_t = 21)]
    pub retention_points: usize,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub calib: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub remaining_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub rank_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "40")]
    pub iters_list: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    pub preserve_list: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seed_list: Vec<u64>,
    #[command(flatten)]
    pub solver: SolverArgs,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Any bundle directory (weights, calibration or compressed).
    pub path: PathBuf,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(a) => commands::calibrate::run(&a),
        Command::Compress(a) => commands::compress::run(&a).map(|_| ()),
        Command::Report(a) => commands::report::run(&a),
        Command::Sweep(a) => commands::sweep::run(&a),
        Command::Inspect(a) => commands::inspect::run(&a, &mut std::io::stdout()),
    }
}
