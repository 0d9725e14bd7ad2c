//! Batch command line over `defocus-core`: estimate, synth, analyze, align,
//! train, eval and bench. Every command is also callable as a library
//! function taking a [`RunConfig`].

pub mod args;
pub mod commands;
pub mod config;
pub mod util;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use config::{RunConfig, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Bad invocation or empty input; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

/// Some, but not all, items of a batch failed; the command still produced
/// output and exits 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub failed: usize,
    pub total: usize,
}

impl Outcome {
    pub fn ok(total: usize) -> Self {
        Self { failed: 0, total }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match commands::dispatch(&cli) {
        Ok(outcome) => {
            if outcome.failed > 0 {
                eprintln!("warning: {} of {} inputs failed", outcome.failed, outcome.total);
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                EXIT_USAGE
            } else {
                EXIT_FAILURE
            }
        }
    }
}
