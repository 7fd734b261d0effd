use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pinchtwist::cli::{run, CliError, EXIT_CONFIG, THREADS_ENV};

/// Lyapunov spectra and pinching/twisting checks from JSON experiment configs.
#[derive(Debug, Parser)]
#[command(version)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Where to write the JSON report; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    #[arg(long)]
    verbose: bool,
}

fn execute(args: &Args) -> Result<i32, CliError> {
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let outcome = run(&text)?;
    let json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    match &args.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    if let Some((path, table)) = &outcome.csv {
        std::fs::write(path, table)?;
    }
    if args.verbose {
        eprintln!(
            "{} {} in {:.2}s, exit {}",
            outcome.report.command,
            outcome.report.config_hash,
            outcome.report.wall_time_secs,
            outcome.exit_code
        );
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let code = match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(u8::try_from(code).unwrap_or(EXIT_CONFIG as u8))
}
