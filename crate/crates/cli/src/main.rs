use std::path::PathBuf;
use std::process::ExitCode;

use acmc_cli::{execute, Command, Format, Options, RunError};
use clap::Parser;

/// Finds and certifies critical points of the mass-constrained Allen–Cahn
/// energy on planar domains.
#[derive(Debug, Parser)]
#[command(name = "acmc", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment configuration (optional for `check`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `solver.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Stdout rendering of the payload.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Acceptance criteria to run with `check`, comma separated.
    #[arg(long, value_delimiter = ',')]
    criteria: Vec<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --jobs: {e}");
            return ExitCode::from(2);
        }
    }
    let opts = Options {
        config: cli.config,
        out: cli.out,
        seed: cli.seed,
        format: cli.format,
        criteria: cli.criteria,
    };
    match execute(cli.command, &opts) {
        Ok(outcome) => {
            print!("{}", outcome.stdout);
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ RunError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
