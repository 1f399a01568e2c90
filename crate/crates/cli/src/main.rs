//! `optport` command-line driver.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical failure.

mod args;
mod commands;
mod error;
mod output;
mod verify;

use std::io::Write;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Price(a) => commands::price(a),
        Command::Greeks(a) => commands::greeks(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Verify(a) => verify::verify(a),
        Command::Experiment(a) => commands::experiment(a),
    };
    match result {
        Ok(out) => {
            emit(&out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            if let error::CliError::Reported { output, .. } = &e {
                emit(output);
            }
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Writes to stdout, tolerating a closed pipe (e.g. `| head`).
fn emit(text: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout
        .write_all(text.as_bytes())
        .and_then(|_| stdout.flush());
}
