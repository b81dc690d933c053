//! Thin command-line front end over the library: execute experiment grids,
//! build reports from run logs, and compute rank statistics over accuracy
//! matrices. Exit codes: 0 ok, 2 config error, 3 provider failure, 4 data
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use maps::analytics::{self, AccuracyMatrix, AnalyticsError};
use maps::config::ExperimentConfig;
use maps::money::PriceSheet;
use maps::orchestrator::{self, OrchestratorError, RunOptions, LOG_FILE};
use maps::report::{self, ReportError};
use maps::runlog::{self, RunLogError};

#[derive(Parser)]
#[command(
    name = "maps",
    version,
    about = "multi-layer self-reflection evaluation harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment grid described by a config file.
    Run(RunArgs),
    /// Build accuracy, cost, and rank-statistics reports from a run log.
    Report(ReportArgs),
    /// Friedman/Nemenyi rank statistics over an accuracy-matrix CSV.
    Stats(StatsArgs),
    /// Print the seeded question-id samples for audit.
    Sample(ConfigArgs),
    /// Validate a config file and everything it references.
    Validate(ConfigArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Allow providers that spend real money; off by default.
    #[arg(long)]
    live: bool,
    /// Worker threads across attempts (overrides the config value).
    #[arg(long, value_name = "N")]
    parallel: Option<usize>,
    /// Stop after this many new attempts (the log stays resumable).
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run-log directory (the one `run` wrote).
    #[arg(long, value_name = "DIR")]
    log: PathBuf,
    /// Price sheet (JSON, model -> per-million-token rates).
    #[arg(long, value_name = "FILE")]
    prices: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Accuracy matrix CSV: header `block,<treatment>...`, one row per block.
    #[arg(long, value_name = "CSV")]
    matrix: PathBuf,
    /// Significance level for the critical difference (0.05 only).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Drop blocks in which every treatment scored identically.
    #[arg(long)]
    drop_tied_blocks: bool,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error(transparent)]
    Log(#[from] RunLogError),
    #[error("price sheet: {0}")]
    Prices(String),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Stats(#[from] AnalyticsError),
    #[error("write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Orchestrator(e) => e.exit_code() as u8,
            CliError::Log(_) => 4,
            CliError::Prices(_) => 2,
            CliError::Report(ReportError::Price(_)) => 2,
            CliError::Report(_) => 4,
            CliError::Stats(AnalyticsError::UnsupportedAlpha(_)) => 2,
            CliError::Stats(_) => 4,
            CliError::Write { .. } => 4,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Writes to stdout, exiting quietly if the reader has gone away (e.g.
/// piped into `head`); the Rust runtime masks SIGPIPE, so the EPIPE error
/// surfaces here instead.
fn emit(text: impl std::fmt::Display) {
    use std::io::Write;
    let mut out = std::io::stdout();
    if write!(out, "{text}").and_then(|()| out.flush()).is_err() {
        std::process::exit(0);
    }
}

fn emitln(text: impl std::fmt::Display) {
    emit(format_args!("{text}\n"));
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => run(args),
        Command::Report(args) => build_report(args),
        Command::Stats(args) => stats(args),
        Command::Sample(args) => sample(args),
        Command::Validate(args) => validate(args),
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    Ok(ExperimentConfig::load(path).map_err(OrchestratorError::from)?)
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let options = RunOptions {
        live: args.live,
        parallel: args.parallel,
        limit: args.limit,
    };
    let summary = orchestrator::run_experiment(&config, &options)?;
    for warning in &summary.warnings {
        eprintln!("warning: {warning}");
    }
    if let Some(cost) = summary.projected_cost_usd {
        eprintln!("projected live cost: {} usd", cost.format_usd(6));
    }
    emitln(format_args!(
        "attempts: {} total, {} already logged, {} executed",
        summary.total_attempts, summary.already_logged, summary.executed
    ));
    emitln(format_args!("log: {}", summary.log_path.display()));
    emitln(format_args!(
        "manifest: {}",
        summary.manifest_path.display()
    ));
    Ok(())
}

fn build_report(args: ReportArgs) -> Result<(), CliError> {
    let log_path = args.log.join(LOG_FILE);
    let records = runlog::read_records(&log_path)?;
    let prices = PriceSheet::from_json_file(&args.prices).map_err(CliError::Prices)?;
    let report = report::build_report(&records, &prices)?;
    report
        .write_files(&args.log)
        .map_err(|source| CliError::Write {
            path: args.log.clone(),
            source,
        })?;
    emit(&report.text);
    Ok(())
}

fn stats(args: StatsArgs) -> Result<(), CliError> {
    let matrix = AccuracyMatrix::from_csv_path(&args.matrix)?;
    let matrix = if args.drop_tied_blocks {
        let (trimmed, dropped) = matrix.without_fully_tied_blocks();
        if !dropped.is_empty() {
            emitln(format_args!(
                "dropped fully tied blocks: {}",
                dropped.join(", ")
            ));
        }
        trimmed
    } else {
        matrix
    };
    let summary = analytics::rank_summary(&matrix, args.alpha)?;
    emit(report::render_rank_summary(&summary));
    Ok(())
}

fn sample(args: ConfigArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let manifest = orchestrator::sample_manifest(&config)?;
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    emitln(json);
    Ok(())
}

fn validate(args: ConfigArgs) -> Result<(), CliError> {
    let config = load_config(&args.config)?;
    let report = orchestrator::validate_experiment(&config)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    emitln(json);
    Ok(())
}
