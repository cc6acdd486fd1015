//! Experiment runner for `pel-core`: loads a TOML configuration, runs one of
//! the verification suites and writes deterministic CSV tables plus a
//! PASS/FAIL summary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod run;

pub use config::ExperimentConfig;
pub use report::{emit_report, Check, Report, Table};
pub use run::{run, Command, Overrides};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(#[from] pel_core::Error),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("nothing to report: {0}")]
    EmptyResults(String),
}

impl CliError {
    /// 2 for configuration and output problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io(_) => 2,
            Self::Numerical(_) | Self::EmptyResults(_) => 3,
        }
    }
}

/// Exit status for a finished run: 0 when every check passed, 1 otherwise.
pub fn exit_code_for(report: &Report) -> i32 {
    if report.all_passed() {
        0
    } else {
        1
    }
}
