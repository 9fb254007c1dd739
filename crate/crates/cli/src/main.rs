//! `btest`: command-line front end for the B-test toolkit.
//!
//! Exit codes: 0 accept (or success), 1 reject, 2 usage or data error.

mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match &cli.command {
        Command::Test(a) => a.common.threads,
        Command::BenchBlobs(a) => a.common.threads,
        Command::Complexity(a) => a.common.threads,
        Command::Timing(a) => a.common.threads,
        Command::Calibrate(a) => a.common.threads,
    };
    if let Some(t) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match cli.command {
        Command::Test(a) => commands::test(a),
        Command::BenchBlobs(a) => commands::bench_blobs(a),
        Command::Complexity(a) => commands::complexity(a),
        Command::Timing(a) => commands::timing(a),
        Command::Calibrate(a) => commands::calibrate(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
