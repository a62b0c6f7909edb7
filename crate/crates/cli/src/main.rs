//! `dtsurv` command-line interface.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data or estimability
//! error, 4 convergence failure. Failures print a one-line message followed
//! by a JSON object on stderr.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use thiserror::Error;

mod commands;
mod output;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] dtsurv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use dtsurv::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Core(e) => match e {
                E::Argument(_) | E::Admissibility { .. } | E::Json(_) => 2,
                E::Convergence { .. } | E::Root { .. } => 4,
                _ => 3,
            },
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.kind(),
        }
    }

    fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        });
        match self {
            CliError::Core(dtsurv::Error::Estimability { cells }) => {
                v["cells"] = json!(cells);
            }
            CliError::Core(dtsurv::Error::BoundaryCell { event, time, events, at_risk }) => {
                v["cells"] = json!([{ "event": event, "time": time, "count": events, "at_risk": at_risk }]);
            }
            _ => {}
        }
        v
    }
}

#[derive(Debug, Parser)]
#[command(name = "dtsurv", version, about = "Discrete-time competing-risks regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a dataset and write it as CSV, with its settings as JSON.
    Simulate(SimulateArgs),
    /// Write the event table (events per type, censored, at risk) of a dataset.
    Inspect(InspectArgs),
    /// Fit the model and write the coefficient table, model and report.
    Fit(FitArgs),
    /// Predict hazards, event probabilities, cumulative incidence and survival.
    Predict(PredictArgs),
    /// Time both estimators on simulated data over a grid of `d`.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Column mapping, e.g. `id=pid,time=X,event=J`.
    #[arg(long)]
    pub schema: Option<String>,
    /// Covariate columns, comma separated (default: every other column).
    #[arg(long)]
    pub covariates: Option<String>,
    /// Grid size `d`; inferred from the latest event time when omitted.
    #[arg(long)]
    pub n_times: Option<usize>,
    /// Number of event types; inferred from the largest code when omitted.
    #[arg(long)]
    pub n_events: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    /// Two causes, five U[0,1) covariates, uniform discrete censoring.
    Standard,
    /// The standard design with type-1 events on days 7, 14 and 21 mostly redrawn.
    Weekend,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub output: PathBuf,
    /// Built-in design (ignored when `--spec` is given).
    #[arg(long, value_enum, default_value = "standard")]
    pub preset: Preset,
    /// Simulation settings as JSON, as written next to a previous output.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,
    /// Grid size for the built-in designs.
    #[arg(long, default_value_t = 30)]
    pub d: usize,
    /// Probability of a finite censoring draw for the built-in designs.
    #[arg(long, default_value_t = 0.8)]
    pub censoring_prob: f64,
    /// Overrides the seed in `--spec`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    Expansion,
    TwoStage,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TiesArg {
    Breslow,
    Efron,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Coefficient table CSV; `.json`, `.model.json` and `.report.json` siblings are also written.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value = "two-stage")]
    pub method: MethodArg,
    /// Penalty weight, or one weight per covariate (comma separated).
    #[arg(long)]
    pub penalizer: Option<String>,
    /// Share of the penalty that is L1 (1 = lasso, 0 = ridge).
    #[arg(long, default_value_t = 0.0)]
    pub l1_ratio: f64,
    /// Collapse every time after this one into it before fitting.
    #[arg(long)]
    pub clip_upper: Option<usize>,
    /// Merge time points before fitting, e.g. `7:6,14:13,21:20`.
    #[arg(long)]
    pub merge: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub min_events: usize,
    /// Tie handling of the two-stage partial likelihood.
    #[arg(long, value_enum, default_value = "efron")]
    pub ties: TiesArg,
    /// Fit event types on separate threads.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with an id column and the model's covariate columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "pid")]
    pub id_column: String,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Timing CSV; a `.summary.csv` sibling holds the median ratios.
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, default_value = "15,30")]
    pub d_grid: String,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long, default_value_t = 50_000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Inspect(args) => commands::inspect(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Predict(args) => commands::predict(&args),
        Command::Benchmark(args) => commands::benchmark(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
