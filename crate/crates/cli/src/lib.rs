//! Experiment harness around `dips-core`: config parsing, estimator
//! subcommands, CSV/SVG artifacts and reports.

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;
pub mod report;

use std::ffi::OsString;

use clap::Parser;

pub use commands::Cli;

#[derive(Debug)]
pub enum CliError {
    /// Bad config or command line; every problem found is listed.
    Validation(Vec<String>),
    /// Failure while running or writing results.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn runtime(msg: impl std::fmt::Display) -> Self {
        CliError::Runtime(msg.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(errors) => {
                writeln!(f, "invalid configuration ({} problem{}):", errors.len(), if errors.len() == 1 { "" } else { "s" })?;
                for e in errors {
                    writeln!(f, "  {e}")?;
                }
                Ok(())
            }
            CliError::Runtime(msg) => writeln!(f, "error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::runtime(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::runtime(e)
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
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
    match commands::run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprint!("{e}");
            e.exit_code()
        }
    }
}
