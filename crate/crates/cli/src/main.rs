//! `dynerr`: generate trajectories, compute dynamical indices, evaluate
//! forecasts and run rollout studies from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use dynerr::DEFAULT_QUANTILE;

#[derive(Debug, Parser)]
#[command(name = "dynerr", version, about = "Dynamical-indices forecast diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a system, split 70/15/15 and write the splits with z-score statistics.
    Generate(GenerateArgs),
    /// Local dimension and inverse persistence of every query state.
    Indices(IndicesArgs),
    /// Score a prediction file against the truth.
    Evaluate(EvaluateArgs),
    /// Recursive forecasts from many test windows, scored at chosen times.
    Rollout(RolloutArgs),
    /// Merge report JSON files into one comparison CSV.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemArg {
    Lorenz,
    Ks,
}

impl From<SystemArg> for dynerr::generators::System {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Lorenz => Self::Lorenz,
            SystemArg::Ks => Self::Ks,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatArg {
    Binary,
    Csv,
}

impl FormatArg {
    pub fn format(self) -> dynerr::Format {
        match self {
            FormatArg::Binary => dynerr::Format::Binary,
            FormatArg::Csv => dynerr::Format::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            FormatArg::Binary => "dytr",
            FormatArg::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelArg {
    Persistence,
    Analog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitsArg {
    Steps,
    Lt,
}

fn parse_quantile(s: &str) -> Result<f64, String> {
    let q: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if q > 0.5 && q < 1.0 {
        Ok(q)
    } else {
        Err(format!("quantile must lie in (0.5, 1), got {q}"))
    }
}

#[derive(Debug, Args, serde::Serialize)]
pub struct GenerateArgs {
    pub system: SystemArg,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Recorded rows after the transient [default: lorenz 1000000, ks 99600]
    #[arg(long)]
    pub steps: Option<usize>,
    /// Integration step (lorenz) or internal step (ks) [default: 0.01]
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integrator steps dropped before recording [default: lorenz 1000, ks 10000]
    #[arg(long)]
    pub discard: Option<usize>,
    /// Seed for the KS initial condition.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Binary)]
    pub format: FormatArg,
    /// Write the splits unnormalized (statistics are still written).
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 28.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 2.667)]
    pub beta: f64,
    /// KS domain length.
    #[arg(long, default_value_t = 22.0)]
    pub length: f64,
    /// KS grid points (power of two).
    #[arg(long, default_value_t = 64)]
    pub grid: usize,
    /// KS internal steps per stored row.
    #[arg(long, default_value_t = 25)]
    pub downsample: usize,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct IndicesArgs {
    /// Reference attractor (usually the training split).
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub query: PathBuf,
    /// Threshold quantile, in (0.5, 1).
    #[arg(long, default_value_t = DEFAULT_QUANTILE, value_parser = parse_quantile)]
    pub q: f64,
    /// Output CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value_t = DEFAULT_QUANTILE, value_parser = parse_quantile)]
    pub q: f64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Lead time of the predictions, in steps.
    #[arg(long, default_value_t = 1)]
    pub lead: usize,
    /// Latitudes in degrees (whitespace or comma separated); states are
    /// read as `lat x lon` grids.
    #[arg(long)]
    pub lats: Option<PathBuf>,
    /// z-score statistics for the normalized metrics [default: truth statistics]
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct RolloutArgs {
    #[arg(long, value_enum, default_value_t = ModelArg::Analog)]
    pub model: ModelArg,
    /// Analog neighbour count.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Window length in steps.
    #[arg(long, default_value_t = 3)]
    pub m: usize,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Rollout length in steps [default: 1100 for lorenz, 279 for ks]
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, default_value_t = 500)]
    pub starts: usize,
    /// Evaluation times, comma separated, in `--units`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub eval: Vec<f64>,
    #[arg(long, value_enum, default_value_t = UnitsArg::Steps)]
    pub units: UnitsArg,
    /// System, for Lyapunov-time units and the default length.
    #[arg(long, value_enum)]
    pub system: Option<SystemArg>,
    #[arg(long, default_value_t = DEFAULT_QUANTILE, value_parser = parse_quantile)]
    pub q: f64,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, serde::Serialize)]
pub struct ReportArgs {
    /// Report JSON files (evaluate or rollout outputs).
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("DYNERR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("DYNERR_THREADS must be a positive integer, got {v:?}"))?;
        if n == 0 {
            anyhow::bail!("DYNERR_THREADS must be a positive integer, got 0");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Indices(a) => commands::indices(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Rollout(a) => commands::rollout(&a),
        Command::Report(a) => commands::report(&a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
