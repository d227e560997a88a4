use std::process::ExitCode;

use clap::Parser;
use thinfilm_cli::{execute, Cli, ExitStatus};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::InputError.code() as u8 } else { 0 });
        }
    };
    let outcome = execute(&cli.command);
    print!("{}", outcome.output);
    if let Some(e) = &outcome.error {
        eprintln!("error: {e}");
    }
    ExitCode::from(outcome.status.code() as u8)
}
