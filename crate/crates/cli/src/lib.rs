//! Experiment harness around `setkkl-core`: JSON configs in, CSV artifacts
//! and a meta.json out. See the `setkkl` binary for the CLI front end.

use std::fmt;

pub mod commands;
pub mod config;
pub mod csvio;

#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration (exit code 2).
    Config(String),
    /// Numerical failure during execution (exit code 3).
    Numeric(setkkl_core::Error),
    /// Artifact I/O failure (exit code 3).
    Io(std::io::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Numeric(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "io failure: {e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) | CliError::Io(_) => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_contract() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Numeric(setkkl_core::Error::NonFiniteState { t: 1.0 }).exit_code(),
            3
        );
        let io = std::io::Error::new(std::io::ErrorKind::Other, "disk");
        assert_eq!(CliError::Io(io).exit_code(), 3);
    }
}
