//! Command-line front end: solve, synth, verify, check and export-sdpa.

mod args;
mod commands;
mod error;
mod format;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use crate::args::Cli;
use crate::error::CliError;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
            return fail(&CliError::Usage(first));
        }
    };
    match commands::run(cli.command) {
        Ok(verdict) => ExitCode::from(verdict as u8),
        Err(e) => fail(&e),
    }
}

/// Input errors exit with 1 and a JSON error object on standard error.
fn fail(e: &CliError) -> ExitCode {
    eprint!("{}", format::to_json(&e.to_object()));
    ExitCode::from(1)
}
