//! Batch driver for portability tuning.
//!
//! Subcommands: `ingest` (CSV / CLBlast JSON -> canonical dataset),
//! `generate` (synthetic planted datasets), `tune` (variant-set selection),
//! `evaluate` (reports, sweeps, holdout and fleet experiments).
//!
//! Exit codes are stable: 0 ok, 2 ingest/generate failure, 3 tune failure,
//! 4 evaluate failure. All randomness flows from `--seed`; `--no-timestamp`
//! strips wall-clock fields so reruns are byte-identical.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "portune", version, about = "Portability tuning for multi-versioned kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read a benchmark dataset, validate it and write the canonical form.
    Ingest(IngestArgs),
    /// Generate a synthetic dataset with a planted optimal variant set.
    Generate(GenerateArgs),
    /// Select a variant set minimizing an objective over a scope.
    Tune(TuneArgs),
    /// Evaluate selections: reports, sweeps, holdout and fleet experiments.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Clblast,
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveKind {
    Library,
    Fleet,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Input dataset path.
    #[arg(long)]
    dataset: std::path::PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// JSON file remapping CSV column names (see CsvSchema).
    #[arg(long)]
    schema: Option<std::path::PathBuf>,
    /// CLBlast section filter: kernel family.
    #[arg(long, default_value = "xgemm")]
    family: String,
    /// CLBlast section filter: precision.
    #[arg(long, default_value = "32")]
    precision: String,
    /// Output path for the canonical dataset.
    #[arg(long)]
    out: std::path::PathBuf,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    devices: usize,
    /// Grid dimensions; inputs are the full MxNxK cross product.
    #[arg(long, value_delimiter = ',', default_values_t = [256u32, 512, 1024, 4096])]
    grid: Vec<u32>,
    /// Explicit input list (MxNxK, comma separated) overriding --grid.
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<String>>,
    #[arg(long, default_value_t = 100)]
    variants: usize,
    /// Planted specialist count (g).
    #[arg(long, default_value_t = 5)]
    specialists: usize,
    /// Slowdown gap of non-specialists (> 1).
    #[arg(long, default_value_t = 2.0)]
    gap: f64,
    /// Non-specialist slowdowns spread uniformly in [gap, gap*(1+spread)].
    #[arg(long, default_value_t = 0.2)]
    gap_spread: f64,
    #[arg(long, default_value_t = 16)]
    param_arity: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path for the canonical dataset.
    #[arg(long)]
    out: std::path::PathBuf,
    /// Optional path for the plant metadata (specialist configurations).
    #[arg(long)]
    plant_out: Option<std::path::PathBuf>,
}

#[derive(Args)]
pub struct ScopeArgs {
    /// Device allowlist.
    #[arg(long, value_delimiter = ',')]
    devices: Option<Vec<String>>,
    /// Input allowlist (MxNxK, comma separated).
    #[arg(long, value_delimiter = ',')]
    inputs: Option<Vec<String>>,
}

#[derive(Args)]
pub struct DatasetArgs {
    #[arg(long)]
    dataset: std::path::PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    format: Format,
    #[arg(long)]
    schema: Option<std::path::PathBuf>,
    #[arg(long, default_value = "xgemm")]
    family: String,
    #[arg(long, default_value = "32")]
    precision: String,
}

#[derive(Args)]
pub struct TuneArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value = "stochastic")]
    method: String,
    #[arg(long, value_enum, default_value = "library")]
    objective: ObjectiveKind,
    /// Fleet spec JSON ({"devices": {...}, "inputs": {"MxNxK": q}}).
    #[arg(long)]
    fleet: Option<std::path::PathBuf>,
    /// Variant budget |kappa|.
    #[arg(long, default_value_t = 1)]
    kappa: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock search budget per tuning.
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    /// Combination cap for the exhaustive method.
    #[arg(long, default_value_t = 10_000_000)]
    enum_cap: u64,
    #[command(flatten)]
    scope: ScopeArgs,
    /// Output directory (result.json, iterations.csv).
    #[arg(long)]
    out: std::path::PathBuf,
    /// Strip wall-clock fields for byte-reproducible outputs.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(subcommand)]
    command: EvaluateCommand,
}

#[derive(Subcommand)]
enum EvaluateCommand {
    /// Evaluate an existing selection result over a scope.
    Report(ReportArgs),
    /// Geomean versus kappa, aggregated over repeated runs.
    Sweep(SweepArgs),
    /// Unseen-device generalization with scoping hygiene checks.
    Holdout(HoldoutArgs),
    /// Median fleet task rate per method versus the pooled baseline.
    Fleet(FleetArgs),
}

#[derive(Args)]
pub struct ReportArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Selection result JSON produced by `tune`.
    #[arg(long)]
    result: std::path::PathBuf,
    #[arg(long)]
    fleet: Option<std::path::PathBuf>,
    #[command(flatten)]
    scope: ScopeArgs,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    #[arg(long, default_value = "stochastic")]
    method: String,
    /// Ascending kappa values.
    #[arg(long, value_delimiter = ',', required = true)]
    kappas: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    #[arg(long, default_value_t = 10_000_000)]
    enum_cap: u64,
    /// Worker threads for repetitions (default: available parallelism).
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    scope: ScopeArgs,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
pub struct HoldoutArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Devices whose environments feed the selection.
    #[arg(long, value_delimiter = ',', required = true)]
    train_devices: Vec<String>,
    /// Devices whose environments are evaluated.
    #[arg(long, value_delimiter = ',', required = true)]
    eval_devices: Vec<String>,
    /// Enforce disjoint train/eval device sets.
    #[arg(long)]
    unseen: bool,
    #[arg(long, default_value = "stochastic")]
    method: String,
    #[arg(long, default_value_t = 5)]
    kappa: usize,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    #[arg(long, default_value_t = 10_000_000)]
    enum_cap: u64,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args)]
pub struct FleetArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Fleet spec JSON path.
    #[arg(long)]
    fleet: std::path::PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "stochastic,kmeans,tree")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 5)]
    kappa: usize,
    #[arg(long, default_value_t = 30)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30_000)]
    budget_ms: u64,
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    scope: ScopeArgs,
    #[arg(long)]
    out: std::path::PathBuf,
    #[arg(long)]
    no_timestamp: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (label, code, result) = match cli.command {
        Command::Ingest(args) => ("ingest", 2, commands::ingest(args)),
        Command::Generate(args) => ("generate", 2, commands::generate(args)),
        Command::Tune(args) => ("tune", 3, commands::tune(args)),
        Command::Evaluate(args) => (
            "evaluate",
            4,
            match args.command {
                EvaluateCommand::Report(a) => commands::report(a),
                EvaluateCommand::Sweep(a) => commands::sweep(a),
                EvaluateCommand::Holdout(a) => commands::holdout(a),
                EvaluateCommand::Fleet(a) => commands::fleet(a),
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{label} failed: {e}");
            ExitCode::from(code)
        }
    }
}
