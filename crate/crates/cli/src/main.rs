//! `slicecrack` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 pipeline
//! invariant violation.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "slicecrack",
    version,
    about = "Recover and verify LLC slice hashes on a simulated cache"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Run seed; overrides the config's `seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Latency jitter standard deviation in cycles; overrides the config.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Find capacity knees for power-of-two strides (knees.csv).
    StrideScan(Common),
    /// Simulate the configured workload and write its trace (trace.csv).
    GenTrace(Common),
    /// Group blocks by eviction edges (groups.csv, diagnostics.csv).
    Classify {
        #[command(flatten)]
        common: Common,
        /// Classify this trace instead of simulating the workload.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Full trace pipeline against the planted hash.
    Crack(Common),
    /// Timing-only grouping of one set index (probe_groups.csv).
    Probe(Common),
    /// Page-color plan and disjointness check (plan.csv).
    Partition(Common),
    /// Consolidated text report (report.txt).
    Report(Common),
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invariant(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Invariant(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::StrideScan(c) => commands::stride_scan_cmd(c),
        Command::GenTrace(c) => commands::gen_trace(c),
        Command::Classify { common, trace } => commands::classify(common, trace.as_deref()),
        Command::Crack(c) => commands::crack(c),
        Command::Probe(c) => commands::probe(c),
        Command::Partition(c) => commands::partition(c),
        Command::Report(c) => commands::report(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}
