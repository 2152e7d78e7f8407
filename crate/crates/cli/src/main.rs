mod args;
mod commands;
mod record;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Verify(a) => commands::verify(a).map(|ok| if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE }),
        Command::Run(a) => commands::run(a).map(|_| ExitCode::SUCCESS),
        Command::Model(a) => commands::model(a).map(|_| ExitCode::SUCCESS),
        Command::Tune(a) => commands::tune(a).map(|_| ExitCode::SUCCESS),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
