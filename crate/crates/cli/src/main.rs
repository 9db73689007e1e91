//! `translab`: soliton, verify, second-variation and flow experiments.

mod args;
mod commands;
mod report;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Soliton(a) => commands::soliton(&cli.command, a),
        Command::Verify(a) => commands::verify(&cli.command, a),
        Command::SecondVariation(a) => commands::second_variation(&cli.command, a),
        Command::Flow(a) => commands::flow(&cli.command, a),
    };
    match result {
        Ok(outcome) => {
            if outcome.failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.failures {
                    eprintln!("check failed: {f}");
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
