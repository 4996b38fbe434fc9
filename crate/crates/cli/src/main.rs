//! `billiards`: spectra, region weights and partial Weyl law checks for
//! desymmetrized billiards.

mod config;
mod pipeline;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;
use pipeline::Failure;

/// Worker threads for the numerical stages; unset means one per core.
const WORKERS_ENV: &str = "BILLIARDS_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "billiards", version, about = "Billiard spectra and the partial Weyl law")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(global = true, short, long, default_value = "billiards.conf")]
    config: PathBuf,
    /// Seed for Monte Carlo estimates; overrides `[run] seed`.
    #[arg(global = true, long)]
    seed: Option<u64>,
    /// Output directory; overrides `[run] out_dir`.
    #[arg(global = true, long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Compute the spectrum and write spectrum.csv plus the state cache.
    Solve,
    /// Append region weights to spectrum.csv.
    Classify,
    /// Fit partial staircases and write staircase_<region>.csv.
    Weyl,
    /// Wall depletion of rectangle modes; writes depletion.csv.
    Halfplane,
    /// Summarize all results in report.txt.
    Report {
        /// Exit with status 3 when a configured check fails.
        #[arg(long)]
        check: bool,
    },
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(v) = std::env::var(WORKERS_ENV) else { return Ok(()) };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| Failure::Usage(format!("{WORKERS_ENV}='{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot start {n} workers: {e}")))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    configure_workers()?;
    let mut cfg = RunConfig::load(&cli.config).map_err(Failure::Usage)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(d) = &cli.out_dir {
        cfg.out_dir = d.clone();
    }
    match cli.command {
        Command::Solve => pipeline::solve(&cfg),
        Command::Classify => pipeline::classify(&cfg),
        Command::Weyl => pipeline::weyl(&cfg),
        Command::Halfplane => pipeline::halfplane(&cfg),
        Command::Report { check } => pipeline::report(&cfg, check),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
