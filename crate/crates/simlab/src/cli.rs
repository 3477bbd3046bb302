//! Command-line definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "simlab", version, about = "Monte Carlo experiments for implicit profiling")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Directory for CSV/JSON output; without it per-replicate CSV goes to stdout.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for the replicate pool.
    #[arg(long, global = true, env = "SEMIPROF_THREADS")]
    pub threads: Option<usize>,
    /// JSON experiment config; explicit flags take precedence over its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Write `NA` instead of wall-clock seconds so output is reproducible byte for byte.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Step counts on the coupled quadratic toy problem.
    Toy(ToyArgs),
    /// Replicated fits of the kernel-smoothed transformation model.
    Transform(TransformArgs),
    /// Replicated fits of the spline-profiled GARCH-in-mean model.
    Garchm(GarchArgs),
    /// Property checks on random quadratic problems.
    Quadcheck(QuadArgs),
    /// Summarise a per-replicate CSV written by another subcommand.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    /// α values as `start:stop:step` or a comma list.
    #[arg(long)]
    pub alpha_grid: Option<String>,
    /// C values as `start:stop:step` or a comma list (default k² for k = 1..10).
    #[arg(long)]
    pub c_grid: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Also emit convergence paths from one starting point.
    #[arg(long)]
    pub paths: bool,
    #[arg(long)]
    pub path_alpha: Option<f64>,
    #[arg(long)]
    pub path_c: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub h_scale: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct GarchArgs {
    #[arg(long)]
    pub setup: Option<String>,
    #[arg(long, short = 't', alias = "T")]
    pub t: Option<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// `conditional` for σ_t·ε_t, or a positive constant scale.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct QuadArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub cond_max: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Treat --p and --q as upper bounds and draw the sizes per trial.
    #[arg(long)]
    pub random_dims: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[arg(long = "in", value_name = "CSV")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    pub format: Format,
}
