use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "riesz-eq",
    version,
    about = "Weighted Riesz, Coulomb and log equilibrium on the ball and the segment"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem; writes density.csv and result.json.
    Solve(SolveArgs),
    /// Print the critical charges of a geometry.
    Critical(ProblemArgs),
    /// Solve for a list or range of charges; writes one density per charge
    /// plus index.csv.
    Sweep(SweepArgs),
    /// Check a density file against a problem (exit 1 on failure).
    Verify(VerifyArgs),
    /// Minimize the discrete energy of N points; writes points.csv.
    Discrete(DiscreteArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Geometry {
    Ball,
    Segment,
    Coulomb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Riesz,
    Log,
    Coulomb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ProblemArgs {
    pub geometry: Geometry,
    #[arg(long)]
    pub d: Option<usize>,
    /// Riesz exponent.
    #[arg(long, allow_hyphen_values = true)]
    pub s: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub height: f64,
}

#[derive(Debug, Clone, Args)]
pub struct NumericArgs {
    /// Collocation degree for iterated balayage; grid size for verify.
    #[arg(long)]
    pub nodes: Option<usize>,
    /// Iteration tolerance on r_k; verification tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Use iterated balayage on the segment and write trace.jsonl.
    #[arg(long)]
    pub iterate: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub solve: SolveArgs,
    /// Comma-separated charges; gamma_minus, gamma_plus and gamma_tilde are
    /// accepted by name.
    #[arg(long, allow_hyphen_values = true, value_delimiter = ',')]
    pub gammas: Vec<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub from: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub to: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub steps: usize,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Density CSV to check.
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
}

#[derive(Debug, Clone, Args)]
pub struct DiscreteArgs {
    #[command(flatten)]
    pub problem: ProblemArgs,
    #[command(flatten)]
    pub numeric: NumericArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Number of points.
    #[arg(long, default_value_t = 400)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub restarts: usize,
}
