use std::process::ExitCode;

use clap::{CommandFactory, Parser};
use pathgrad_cli::Cli;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match pathgrad_cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}\n\n{}", Cli::command().render_usage());
            ExitCode::FAILURE
        }
    }
}
