//! Batch front end: load a [`RunConfig`], run one command, write reports.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;
pub mod verify;

use std::path::PathBuf;

pub use config::RunConfig;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    /// Grid tables, operator dump and structure report.
    Assemble,
    /// Spectral report of the operator.
    Spectrum,
    /// Hydrodynamic and decay constants.
    Constants,
    /// Solve the half-space problem for the configured data.
    Solve,
    /// Run every property suite and write a pass/fail summary.
    Verify,
    /// Slab-length, regularization and grid refinement tables.
    Sweep,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(#[from] milne_core::Error),

    #[error("property suite failed: {0}")]
    Suite(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            // a domain error that slipped past validation is still a config problem
            CliError::Numerical(milne_core::Error::InvalidDomain(_)) => 1,
            CliError::Numerical(_) => 2,
            CliError::Suite(_) => 3,
        }
    }
}

/// Runs `command` and returns the files written, in order.
pub fn run(command: Command, cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut out = report::Writer::new(cfg)?;
    match command {
        Command::Assemble => pipeline::assemble(cfg, &mut out)?,
        Command::Spectrum => pipeline::spectrum(cfg, &mut out)?,
        Command::Constants => pipeline::constants(cfg, &mut out)?,
        Command::Solve => pipeline::solve(cfg, &mut out)?,
        Command::Verify => verify::run(cfg, &mut out)?,
        Command::Sweep => sweep::run(cfg, &mut out)?,
    }
    Ok(out.written().to_vec())
}
