//! `garrote` command-line driver.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use garrote_core::SolverId;

#[derive(Parser, Debug)]
#[command(name = "garrote", version, about = "Sparse regression experiments with the Variational Garrote")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Base seed for teachers, members and initialisations.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for ensemble fits.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Directory holding the raw real-data files (falls back to $DATA_DIR, then ./data).
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// Experiment config as JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Draw a synthetic spike-and-slab dataset and its teacher.
    Generate(GenerateArgs),
    /// Fit one solver at one regularization strength and print the fit as JSON.
    Fit(FitArgs),
    /// Sweep every solver over its regularization grid.
    Sweep(SweepArgs),
    /// Find the strength whose mean model density hits a target.
    TargetRho(TargetArgs),
    /// Infer the true density from a selection-uncertainty curve.
    InferSparsity(InferArgs),
    /// Write the tables behind one figure.
    Reproduce(ReproduceArgs),
    /// Preprocess a raw real dataset into a binary cache.
    Ingest(IngestArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DatasetKind {
    Synthetic,
    Cc,
    Bf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum RealKind {
    Cc,
    Bf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SyntheticArgs {
    #[arg(long)]
    pub n_features: Option<usize>,
    #[arg(long)]
    pub n_samples: Option<usize>,
    /// Fraction of relevant teacher weights.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub snr: Option<f64>,
    /// Draw each weight independently instead of an exact count.
    #[arg(long)]
    pub binomial: bool,
}

#[derive(Args, Debug, Clone, Default)]
pub struct VgArgs {
    /// Iteration cap for VG fits.
    #[arg(long)]
    pub vg_max_iters: Option<usize>,
    /// Minimum free-energy improvement that resets the plateau counter.
    #[arg(long)]
    pub vg_plateau_threshold: Option<f64>,
    /// Independent VG initialisations per fit.
    #[arg(long)]
    pub vg_restarts: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ExperimentArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Real-data file, directory or cache (overrides --data-dir).
    #[arg(long)]
    pub path: Option<PathBuf>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    #[arg(long)]
    pub members: Option<usize>,
    /// Length of the default regularization grids.
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[command(flatten)]
    pub vg: VgArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub synthetic: SyntheticArgs,
    /// Write the binary cache instead of CSV.
    #[arg(long)]
    pub cache: bool,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long)]
    pub solver: SolverId,
    /// Dataset as CSV or binary cache.
    #[arg(long)]
    pub data: PathBuf,
    /// λ for Ridge/LASSO, γ for VG.
    #[arg(long, allow_hyphen_values = true)]
    pub reg: f64,
    /// Lower bound on |w| for the Ridge mask; without it the mask is all ones.
    #[arg(long)]
    pub ridge_bound: Option<f64>,
    #[command(flatten)]
    pub vg: VgArgs,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma-separated subset of ridge, lasso, vg.
    #[arg(long, value_delimiter = ',')]
    pub solvers: Option<Vec<SolverId>>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Also write every member fit to fits.jsonl.
    #[arg(long)]
    pub persist_fits: bool,
}

#[derive(Args, Debug)]
pub struct TargetArgs {
    #[arg(long)]
    pub solver: SolverId,
    #[arg(long)]
    pub rho_target: f64,
    #[arg(long, default_value_t = 1.0 / 512.0)]
    pub tol: f64,
    #[arg(long, default_value_t = garrote_core::harness::target::MAX_BISECTION_STEPS)]
    pub max_steps: usize,
    /// Search interval as `lo,hi`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub bracket: Option<Vec<f64>>,
    #[command(flatten)]
    pub experiment: ExperimentArgs,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// CSV with `rho_model` and `sigma_sel` columns, e.g. a sweep table.
    #[arg(long)]
    pub curve: PathBuf,
    /// Use only rows of this solver when the table has a `solver` column.
    #[arg(long)]
    pub solver: Option<SolverId>,
    /// Feature count; candidates are k/N for k = 1..N/4.
    #[arg(long)]
    pub n_features: usize,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub fig: garrote_core::harness::FigureId,
    /// Fraction of the full 20,000-member ensemble.
    #[arg(long, default_value_t = 0.01)]
    pub scale: f64,
    /// Override the member count derived from --scale.
    #[arg(long)]
    pub members: Option<usize>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[command(flatten)]
    pub vg: VgArgs,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long, value_enum)]
    pub dataset: RealKind,
    /// Raw file or directory; defaults to <data dir>/<dataset>.
    #[arg(long)]
    pub path: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
