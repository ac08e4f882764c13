use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use philap::cli::{self, Command, RunConfig};

/// Solve discrete singular φ-Laplacian systems described by a JSON problem file.
#[derive(Parser, Debug)]
#[command(name = "philap", version)]
struct Args {
    /// Problem file (JSON).
    #[arg(long)]
    input: PathBuf,
    /// One of solve, energy-min, saddle, lambda1, verify.
    #[arg(long, default_value = "solve")]
    command: Command,
    /// Overrides options.solve.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides options.solve.tol_residual.
    #[arg(long)]
    tol: Option<f64>,
    /// Directory for solution.csv, report.json and reduced_curve.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for batch checks (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// With `verify`: also run this many randomized estimate checks.
    #[arg(long, num_args = 0..=1, default_missing_value = "0")]
    batch: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match fs::read_to_string(&args.input) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.input.display());
            return ExitCode::from(2);
        }
    };
    let spec = match cli::parse_problem(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", args.input.display());
            return ExitCode::from(2);
        }
    };
    let config = RunConfig {
        seed: args.seed,
        tol: args.tol,
        out: args.out,
        workers: args.workers,
        batch: args.batch,
    };
    match cli::run(&spec, args.command, &config) {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
