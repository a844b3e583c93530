//! Experiment driver for the `lowmode` library: runs the convergence,
//! mode-sweep, conditioning, solver-comparison, and interface-decay studies
//! and writes their tables as CSV plus log-log figures as SVG.

use std::fmt;

pub mod config;
pub mod plot;
pub mod runs;
pub mod table;

/// Front-end failure type: library errors, I/O, and malformed outputs each
/// map to their own process exit code.
#[derive(Debug)]
pub enum CliError {
    Lib(lowmode::Error),
    Io(std::io::Error),
    /// A table or figure could not be rendered (non-finite data, bad CSV).
    Format(String),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Lib(e) => e.category(),
            CliError::Io(_) => "io",
            CliError::Format(_) => "format",
        }
    }

    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) => match e.category() {
                "invalid-argument" | "nyquist" | "dimension-mismatch" | "grid-incompatible" => 2,
                "feasibility" => 3,
                "convergence" => 4,
                _ => 1,
            },
            CliError::Io(_) => 5,
            CliError::Format(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Format(msg) => write!(f, "output error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<lowmode::Error> for CliError {
    fn from(e: lowmode::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
