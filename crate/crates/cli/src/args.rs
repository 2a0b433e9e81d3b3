use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Discover dimensionless groups from dimensional data.
#[derive(Debug, Parser)]
#[command(name = "pi-forge", version, about)]
pub struct Cli {
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Random seed. Falls back to `PI_FORGE_SEED`, then the config file,
    /// then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Log verbosity (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Units matrix, exact nullspace and optional bounded candidates.
    Nullspace(NullspaceArgs),
    /// Generate a benchmark data set.
    Simulate(SimulateArgs),
    /// Run one discovery engine.
    Discover(DiscoverArgs),
    /// Write plot data for a saved discovery result.
    ExportPlot(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ColumnSet {
    /// Every declared quantity.
    All,
    /// Parameters and independent variables.
    Inputs,
    /// Parameters only.
    Parameters,
}

#[derive(Debug, Args)]
pub struct NullspaceArgs {
    /// Units file (TOML).
    #[arg(long)]
    pub units: PathBuf,
    /// Which quantities form the units matrix.
    #[arg(long, value_enum, default_value_t = ColumnSet::All)]
    pub columns: ColumnSet,
    /// Enumerate integer candidates with exponents in `[-bound, bound]`.
    #[arg(long)]
    pub bound: Option<i64>,
    /// Output directory; the report is printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum System {
    Pendulum,
    Hoop,
    Blasius,
    Landau,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub system: System,
    /// Generator spec (TOML); built-in defaults otherwise.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Optfit,
    Buckinet,
    Dsindy,
}

/// Where the measurements come from.
#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Table with one column per declared quantity.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Run directory (`params.csv` plus one CSV per run).
    #[arg(long)]
    pub runs: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiscoverArgs {
    #[arg(long, value_enum)]
    pub engine: Engine,
    #[arg(long)]
    pub units: PathBuf,
    #[command(flatten)]
    pub source: Source,
    /// Engine configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of groups to learn.
    #[arg(long)]
    pub groups: Option<usize>,
    /// Quantity whose exponent is scaled to 1 in reported groups.
    #[arg(long)]
    pub anchor: Option<String>,
    /// Multistart count (`optfit`).
    #[arg(long)]
    pub starts: Option<usize>,
    /// Principal components per run for `--runs` input (`buckinet`).
    #[arg(long)]
    pub pca: Option<usize>,
    /// Hyperparameter grid search; uses the default grid unless the config
    /// file sets one (`buckinet`).
    #[arg(long)]
    pub grid: bool,
    /// STLSQ threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Highest state power in the library.
    #[arg(long)]
    pub deg: Option<usize>,
    /// Derivative order of the identified equation (1 or 2).
    #[arg(long)]
    pub order: Option<u8>,
    /// Integer exponent bound for candidates.
    #[arg(long)]
    pub bound: Option<i64>,
    /// Groups per sparse-regression combination.
    #[arg(long)]
    pub pick_k: Option<usize>,
    /// Also write plot data under `<out>/plots`.
    #[arg(long)]
    pub export_plot: bool,
    /// Table used for plot export instead of `--data`.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// `result.json` written by `discover`.
    #[arg(long)]
    pub result: PathBuf,
    #[arg(long)]
    pub units: PathBuf,
    #[command(flatten)]
    pub source: Source,
    /// Table to evaluate the model on instead of `--data`.
    #[arg(long)]
    pub field: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
