use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cuisine_cli::args::Cli::parse();
    match cuisine_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
