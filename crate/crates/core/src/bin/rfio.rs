//! rfio: run and summarize experiments.
//!
//! Usage:
//!   rfio <experiment-kind> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]
//!   rfio report <dir>
//!
//! Exit codes: 0 success, 2 configuration/geometry error, 3 numerical
//! non-convergence or statistical failure. RFIO_SEED and RFIO_THREADS
//! override the config; explicit flags override both. RFIO_OUT supplies
//! a default output directory.

use clap::{Args, Parser, Subcommand};
use rfio_core::harness::{self, Kind};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "rfio", version, about = "random-field experiment driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for manifest and tables (default: RFIO_OUT or ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override run.seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (recorded in the manifest).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean-field minimizer scan over a (beta, eps) grid.
    #[command(name = "mf-scan")]
    MfScan(RunArgs),
    /// Free-energy barrier between the two minimizers.
    Barrier(RunArgs),
    /// Contraction factor of the fixed-point map near the minimizer.
    Contraction(RunArgs),
    /// Profile flow on a strip with tilted boundary data.
    #[command(name = "flow-strip")]
    FlowStrip(RunArgs),
    /// Heat-bath Monte Carlo run with block observables and contours.
    #[command(name = "mc-run")]
    McRun(RunArgs),
    /// Dirty-region fractions and concentration-bound conformance.
    #[command(name = "disorder-stats")]
    DisorderStats(RunArgs),
    /// Finite-volume entropy estimate via tilted sampling.
    #[command(name = "entropy-check")]
    EntropyCheck(RunArgs),
    /// Block-energy approximation error at two interaction ranges.
    #[command(name = "energy-approx")]
    EnergyApprox(RunArgs),
    /// Summarize a finished run directory as JSON.
    Report { dir: PathBuf },
}

fn run_kind(kind: Kind, args: RunArgs) -> ExitCode {
    let out = args
        .out
        .or_else(|| std::env::var("RFIO_OUT").ok().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match harness::run(kind, &args.config, &out, args.seed, args.threads) {
        Ok(artifacts) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&artifacts.summary).unwrap()
            );
            eprintln!("wrote {} files to {}", artifacts.files.len(), out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(harness::exit_code(&e) as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::MfScan(a) => run_kind(Kind::MfScan, a),
        Command::Barrier(a) => run_kind(Kind::Barrier, a),
        Command::Contraction(a) => run_kind(Kind::Contraction, a),
        Command::FlowStrip(a) => run_kind(Kind::FlowStrip, a),
        Command::McRun(a) => run_kind(Kind::McRun, a),
        Command::DisorderStats(a) => run_kind(Kind::DisorderStats, a),
        Command::EntropyCheck(a) => run_kind(Kind::EntropyCheck, a),
        Command::EnergyApprox(a) => run_kind(Kind::EnergyApprox, a),
        Command::Report { dir } => match harness::report(&dir) {
            Ok(summary) => {
                println!("{}", serde_json::to_string_pretty(&summary).unwrap());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(harness::exit_code(&e) as u8)
            }
        },
    }
}
