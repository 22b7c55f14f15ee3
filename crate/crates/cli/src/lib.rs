//! Front end of the `evoir` tool: argument and config handling, CSV
//! ingestion, and the tables, plot data and figures each command writes.
//!
//! [`run`] is the whole program; the pieces are public so tests and other
//! tools can drive a command without a subprocess.

pub mod commands;
pub mod config;
pub mod error;
pub mod input;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use commands::{execute, Outcome, OutputFile};
pub use config::{Cli, Command, Settings};
pub use error::{CliError, CliResult};

/// Parses `args`, runs the command and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run_command(cli.command) {
        Ok(outcome) => {
            print!("{}", outcome.summary);
            0
        }
        Err(e) => {
            eprintln!("evoir: {e}");
            e.exit_code()
        }
    }
}

/// Resolves, executes and writes one command.
pub fn run_command(command: Command) -> CliResult<Outcome> {
    let settings = command.resolve()?;
    let outcome = execute(&settings)?;
    let dir = match &settings {
        Settings::Linreg(s) => &s.common.out_dir,
        Settings::Glmm(s) => &s.common.out_dir,
        Settings::Calibrate(s) => &s.common.out_dir,
    };
    outcome.write_to(dir)?;
    Ok(outcome)
}
