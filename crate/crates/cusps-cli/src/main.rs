use std::io::Write;
use std::process::ExitCode;

use clap::Parser;
use cusps_cli::{run, Cli, CliError};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli).and_then(|out| {
        for w in &out.warnings {
            eprintln!("warning: {w}");
        }
        match &cli.global.out {
            Some(path) => std::fs::write(path, out.body.as_bytes()),
            None => std::io::stdout().write_all(out.body.as_bytes()),
        }
        .map_err(|e| CliError::Io(e.to_string()))
    }) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
