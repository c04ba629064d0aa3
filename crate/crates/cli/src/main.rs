use std::process::ExitCode;

use clap::Parser;
use ghn_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            if outcome.failed_certificates.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: certificate failure: {}", outcome.failed_certificates.join(", "));
                ExitCode::from(5)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
