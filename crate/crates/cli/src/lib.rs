//! Command-line experiments, file formats and parallel restarts for
//! `qnflow-core`.

pub mod args;
pub mod commands;
pub mod io;
pub mod manifest;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};

/// Process exit codes.
pub mod exit {
    /// Finished; for `decompose`, the flow reached a stationary point.
    pub const SUCCESS: i32 = 0;
    /// Any runtime failure: unreadable input, invariant violation, ...
    pub const ERROR: i32 = 1;
    /// `decompose` stopped at `t_max`.
    pub const HORIZON: i32 = 2;
    /// `decompose` stopped because the step size collapsed.
    pub const STALLED: i32 = 3;
    /// Bad flags or flag combinations.
    pub const USAGE: i32 = 64;
}

/// Flag values that parse but make no sense together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Parses `argv` (program name first), runs the command and returns the exit
/// code. Errors are reported on stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::SUCCESS,
                _ => exit::USAGE,
            };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return exit::ERROR;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Decompose(a) => commands::cmd_decompose(a, &argv),
        Command::Consistency(a) => commands::cmd_consistency(a, &argv),
        Command::Ranksweep(a) => commands::cmd_ranksweep(a, &argv),
        Command::Quantify(a) => commands::cmd_quantify(a, &argv),
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                exit::USAGE
            } else {
                exit::ERROR
            }
        }
    }
}
