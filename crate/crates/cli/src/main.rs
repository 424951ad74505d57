use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Parser, Debug)]
#[command(name = "mfkrig", version, about = "Multi-fidelity Kriging response surfaces and event-probability estimates")]
pub struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random stream; overrides the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fit a multi-fidelity model to a dataset bundle.
    Fit(FitArgs),
    /// Posterior mean and variance at a fidelity level.
    Predict(PredictArgs),
    /// Probability of the event under the environment distribution.
    EstimateProb(EstimateArgs),
    /// Recommend the next experiment by information gain per cost.
    DesignNext(DesignArgs),
    /// Re-run one of the built-in experiments.
    Reproduce(ReproduceArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Builtin {
    /// Three-level analytic family on [-5, 5].
    #[value(name = "1d")]
    OneD,
    /// Noisy/exact two-level lane-change split.
    LaneChange,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    /// Bundle manifest, or a directory holding bundle.json.
    #[arg(long, conflicts_with = "builtin")]
    pub data: Option<PathBuf>,
    /// Use a built-in dataset instead of a bundle.
    #[arg(long, value_enum)]
    pub builtin: Option<Builtin>,
    /// Where to write the model JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// CSV with header x1..xd.
    #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
    pub points: Option<PathBuf>,
    /// Evenly spaced points per coordinate over the model's design box.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Fidelity level (defaults to the top level).
    #[arg(long)]
    pub level: Option<usize>,
    /// Predictions CSV (x1..xd,mean,variance).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    Exceed,
    FallBelow,
}

#[derive(Args, Debug)]
pub struct EventArgs {
    /// Event threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Environment distribution (JSON); defaults to uniform over the model's box.
    #[arg(long)]
    pub env: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub event: EventArgs,
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Estimate JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DesignArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Candidate points CSV (header x1..xd).
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Candidate levels, e.g. `1,2,3`.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
    /// Per-level costs, lowest level first, e.g. `1,10,100`.
    #[arg(long, value_delimiter = ',')]
    pub costs: Option<Vec<f64>>,
    #[command(flatten)]
    pub event: EventArgs,
    #[arg(long)]
    pub n_y: Option<usize>,
    /// Environment samples inside the information gain.
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Choice and scored table (JSON); printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Exp1,
    Exp2,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(value_enum)]
    pub experiment: Experiment,
    /// Number of consecutive seeds for exp2.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Report JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mfkrig_core::Error>() {
        Some(e) if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
