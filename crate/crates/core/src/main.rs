use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod cli;

use cli::output::Format;

#[derive(Parser)]
#[command(
    name = "enerprof",
    version,
    about = "Measure, analyze and score inference energy",
    arg_required_else_help = true
)]
struct Cli {
    /// Output format for result tables.
    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerKind {
    Live,
    Replay,
    Synthetic,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    Ratio,
    Manhattan,
}

#[derive(Args)]
pub struct MeasureArgs {
    /// Workload command speaking the line protocol, or `sim:<params>` for the
    /// built-in simulator (e.g. `sim:base_ms=20,per_image_ms=1,oom=64`).
    #[arg(long)]
    pub workload: String,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub gpu_label: String,
    #[arg(long)]
    pub runtime_label: String,
    /// Thermal design power in watts.
    #[arg(long)]
    pub tdp: f64,
    /// Peak FLOPs per second, for the naive estimate.
    #[arg(long)]
    pub peak_compute: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub start_batch: u32,
    #[arg(long)]
    pub max_batch: Option<u32>,
    #[arg(long, default_value_t = 13)]
    pub min_reps: u32,
    #[arg(long, default_value_t = 10.0)]
    pub min_runtime_s: f64,
    #[arg(long, value_enum, default_value = "live")]
    pub sampler: SamplerKind,
    /// Live: command template (`{period_ms}` is substituted). Replay: log
    /// file. Synthetic: profile such as `10:200` or `ramp:0:100:10`.
    #[arg(long)]
    pub sampler_source: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    pub sampler_rate: f64,
    /// Idle power annotation in watts (not subtracted).
    #[arg(long)]
    pub idle_baseline: Option<f64>,
    /// Results store to append to.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ReplayArgs {
    #[arg(long = "in", default_value = "results.jsonl")]
    pub store: PathBuf,
    /// Record id; every run when omitted.
    #[arg(long)]
    pub run: Vec<String>,
}

/// Where analysis input comes from: a store plus metadata, or a bundle.
#[derive(Args, Clone)]
pub struct SourceArgs {
    #[arg(long = "in", conflicts_with = "bundle")]
    pub store: Option<PathBuf>,
    /// Model metadata table (comma or tab separated).
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Accuracy datasets to average; all of a model's datasets when omitted.
    #[arg(long, value_delimiter = ',')]
    pub datasets: Vec<String>,
}

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Directory for CSV tables and JSON series.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub pareto: bool,
    #[arg(long)]
    pub fit: bool,
    #[arg(long)]
    pub naive_vs_measured: bool,
    /// Baseline and optimized setup ids.
    #[arg(long, num_args = 2, value_names = ["BASELINE", "OPTIMIZED"])]
    pub paired: Option<Vec<String>>,
    #[arg(long)]
    pub yearly: bool,
    #[arg(long)]
    pub correlations: bool,
    #[arg(long)]
    pub input_scaling: bool,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Setup id; optional when the data holds a single setup.
    #[arg(long)]
    pub setup: Option<String>,
    #[arg(long, value_enum, default_value = "ratio")]
    pub metric: MetricArg,
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    #[arg(long, default_value_t = 0.0)]
    pub min_accuracy: f64,
    /// `auto` (largest energy among models passing the threshold) or joules.
    #[arg(long, default_value = "auto")]
    pub norm: String,
    /// Pin the normalization in joules; same as `--norm <J>`.
    #[arg(long, conflicts_with = "norm")]
    pub fixed_norm: Option<f64>,
    /// Scale the energy term to percent (`100 * E / N`).
    #[arg(long)]
    pub balanced: bool,
    #[arg(long)]
    pub top: Option<usize>,
    /// Also emit a resolution x resolution score grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Write the grid as JSON to this file instead of printing it.
    #[arg(long, requires = "grid")]
    pub grid_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub store: PathBuf,
    #[arg(long)]
    pub metadata: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep only this setup id (repeatable).
    #[arg(long)]
    pub setup: Vec<String>,
}

#[derive(Args)]
pub struct ValidateArgs {
    #[arg(long = "in")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long)]
    pub bundle: Option<PathBuf>,
}

#[derive(Args)]
pub struct ScenarioArgs {
    /// Directory to write the metadata table, replay logs and case list into.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SimWorkloadArgs {
    /// Simulator parameters, as after `sim:` in `measure --workload`.
    #[arg(long, default_value = "")]
    pub params: String,
    /// Multiply simulated latencies by this factor when sleeping.
    #[arg(long, default_value_t = 1.0)]
    pub time_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep batch sizes for one model and append the runs to a store.
    Measure(MeasureArgs),
    /// Re-derive stored metrics from the raw sample files.
    Replay(ReplayArgs),
    /// Pareto fronts, trend fits, hulls, estimates and setup comparisons.
    Analyze(AnalyzeArgs),
    /// Rank models by an efficiency score.
    Score(ScoreArgs),
    /// Write the explorer bundle.
    Export(ExportArgs),
    /// Check stores, metadata tables and bundles against their invariants.
    Validate(ValidateArgs),
    /// Write the synthetic demo scenario (metadata and replay logs).
    Scenario(ScenarioArgs),
    /// Speak the workload protocol on stdin/stdout in real time.
    SimWorkload(SimWorkloadArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp(None).init();

    let result = match cli.command {
        Command::Measure(a) => cli::commands::measure(a, cli.format),
        Command::Replay(a) => cli::commands::replay(a, cli.format),
        Command::Analyze(a) => cli::commands::analyze(a, cli.format),
        Command::Score(a) => cli::commands::score(a, cli.format),
        Command::Export(a) => cli::commands::export(a, cli.format),
        Command::Validate(a) => cli::commands::validate(a, cli.format),
        Command::Scenario(a) => cli::commands::scenario(a, cli.format),
        Command::SimWorkload(a) => cli::commands::sim_workload(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // reader went away, e.g. `| head`
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<cli::Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
