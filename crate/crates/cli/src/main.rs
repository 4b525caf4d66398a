use std::process::ExitCode;

use clap::Parser;
use codedlf_cli::{clear_failure, mark_failure, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => {
            clear_failure(&cli.out);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            mark_failure(&cli.out, &e);
            ExitCode::FAILURE
        }
    }
}
