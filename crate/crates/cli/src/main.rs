//! `syncmatch` command-line tool. Exit codes: 0 success, 2 usage, 3
//! numerical or topology failure, 4 I/O.

mod args;
mod commands;
mod error;
mod manifest;

use clap::Parser;

use args::{Cli, Command};
use error::{CliError, EXIT_USAGE};

/// Worker count from `SYNCMATCH_THREADS`; unset means rayon's default.
fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("SYNCMATCH_THREADS") else {
        return Ok(());
    };
    let threads: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "SYNCMATCH_THREADS must be a positive integer, got {value:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Register(a) => commands::register_cmd(a),
        Command::BenchSync(a) => commands::bench_sync(a),
        Command::Evaluate(a) => commands::evaluate(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(&cli) {
        if let CliError::Numerical { detail, .. } = &e {
            println!(
                "{}",
                serde_json::to_string_pretty(detail).expect("plain data")
            );
        }
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
