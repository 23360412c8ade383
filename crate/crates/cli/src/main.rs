mod args;
mod commands;
mod config;
mod exit;
mod http;
mod output;
mod report;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};
use crate::exit::Exit;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("prefaudit: {e}");
            ExitCode::from(e.code() as u8)
        }
    }
}

fn run(command: Command) -> Result<(), Exit> {
    let transport = http::HttpTransport::new().map_err(exit::runtime)?;
    commands::run(command, &transport)
}
