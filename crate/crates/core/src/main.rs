use std::process::ExitCode;

use clap::Parser;
use predrec::cli::{diagnostic, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (json, code) = diagnostic(&e);
            eprintln!("{json}");
            ExitCode::from(code)
        }
    }
}
