//! Experiment runner: validates scenario configs, dispatches to
//! `percept-core` and writes `trajectory.csv`, `summary.json` and
//! `plot.svg` per run.

pub mod config;
pub mod output;
pub mod scenarios;
pub mod svg;

use std::path::PathBuf;
use std::time::Instant;

use thiserror::Error;

pub use config::{validate, ScenarioConfig};
pub use output::RunSummary;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),

    #[error("simulation failed: {0}")]
    Simulation(#[from] percept_core::Error),

    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) | CliError::Io { .. } => 3,
        }
    }
}

/// Runs a validated scenario and writes its files; returns the summary
/// and the directory holding the outputs.
pub fn run(cfg: &ScenarioConfig) -> Result<(RunSummary, PathBuf), CliError> {
    let start = Instant::now();
    let outcome = scenarios::dispatch(cfg)?;
    let dir = output::resolve_dir(cfg);
    let summary = output::write_all(cfg, &outcome, &dir, start.elapsed().as_secs_f64())?;
    Ok((summary, dir))
}
