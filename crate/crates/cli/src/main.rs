use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use curved_nbody_cli::{execute, Cli};

fn main() -> ExitCode {
    let result = execute(Cli::parse());
    let _ = std::io::stdout().write_all(result.stdout.as_bytes());
    let _ = std::io::stderr().write_all(result.stderr.as_bytes());
    ExitCode::from(result.exit_code)
}
