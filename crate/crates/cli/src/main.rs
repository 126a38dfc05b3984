use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

mod args;
mod commands;
mod output;

use args::{Cli, Command};
use hypgeo::Error;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Usage(_) | Error::UndefinedDirection => 1,
        Error::DimensionMismatch { .. } | Error::Data(_) => 2,
        Error::NonFinite(_) | Error::Numeric(_) => 3,
        Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::GenData(a) => commands::gen_data(a),
        Command::Split(a) => commands::split(a),
        Command::Train(a) => commands::train(a),
        Command::Embed(a) => commands::embed(a),
        Command::Sample(a) => commands::sample(a),
        Command::Interpolate(a) => commands::interpolate(a),
        Command::Fuse(a) => commands::fuse(a),
        Command::Edit(a) => commands::edit(a),
        Command::GradCheck(a) => commands::grad_check(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
