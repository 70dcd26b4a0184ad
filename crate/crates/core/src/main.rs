use std::process::ExitCode;

use clap::Parser;
use lieadj::cli::{self, Cli};

fn main() -> ExitCode {
    let args = Cli::parse();
    if let Err(e) = cli::configure_threads().and_then(|_| cli::run(&args)) {
        eprintln!("lieadj: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    ExitCode::SUCCESS
}
