use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ssr_cli::config::MethodChoice;
use ssr_cli::{load, run_command, Command, Overrides, RunError};

#[derive(Parser, Debug)]
#[command(name = "ssr", version, about = "Steady-state response of forced nonlinear mechanical systems")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Result CSV; the summary is written next to it
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodChoice>,
    /// Collocation nodes per period
    #[arg(long)]
    nt: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Picard iteration budget
    #[arg(long)]
    max_iter: Option<usize>,
    /// Worker threads for qp-sweep
    #[arg(long)]
    jobs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides { out: cli.out, method: cli.method, nt: cli.nt, tol: cli.tol, max_iter: cli.max_iter };
    let cfg = match load(&cli.config, &overrides, cli.command) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let jobs = cli.jobs.unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    match run_command(&cfg, cli.command, jobs) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} rows to {} (summary {})", report.rows, report.result.display(), report.summary.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                RunError::Config(_) => 2,
                _ => 1,
            })
        }
    }
}
