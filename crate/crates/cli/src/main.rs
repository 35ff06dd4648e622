use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gauss_plap_cli::{run, Experiment, THREADS_ENV};

/// Gaussian p-Laplacian eigenvalue experiments.
#[derive(Parser)]
#[command(version, about)]
struct Args {
    /// Experiment to run; must match the config's `experiment` field.
    #[arg(value_enum)]
    experiment: Experiment,
    /// Path to the JSON run configuration.
    #[arg(long, short)]
    config: PathBuf,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot configure thread pool: {e}");
                    return ExitCode::from(2);
                }
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        }
    }
    match run(&args.config, Some(args.experiment), args.out) {
        Ok(outcome) => {
            let dir = outcome.output_dir.display();
            println!("{}: {} (results in {dir})", args.experiment.name(), outcome.record.verdict);
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
