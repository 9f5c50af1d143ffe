use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use fftconv_bench::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match run(cli) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::FAILURE;
        }
    };
    let written = match &outcome.out {
        Some(path) => std::fs::write(path, &outcome.report),
        None => std::io::stdout().write_all(outcome.report.as_bytes()),
    };
    if let Err(e) = written {
        eprintln!("error: writing report: {e}");
        return ExitCode::FAILURE;
    }
    if outcome.ok {
        ExitCode::SUCCESS
    } else {
        eprintln!("tolerance violated");
        ExitCode::FAILURE
    }
}
