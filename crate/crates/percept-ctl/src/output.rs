//! Run artifacts: CSV table, JSON summary and SVG plot.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::ScenarioConfig;
use crate::scenarios::Outcome;
use crate::CliError;

pub const OUTPUT_ENV: &str = "PERCEPT_CTL_OUTPUT";

#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub seed: u64,
    pub parameters: Map<String, Value>,
    pub verdicts: Map<String, Value>,
    pub metrics: Map<String, Value>,
    pub notes: Vec<String>,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Column names plus numeric rows.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Values use 17 significant digits so rows read back bit for bit.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(|v| format!("{v:.16e}")))
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
    }
}

/// `output_dir` from the config, else `$PERCEPT_CTL_OUTPUT/<scenario>-seed<seed>`,
/// else the same under `./percept-out`.
pub fn resolve_dir(cfg: &ScenarioConfig) -> PathBuf {
    if let Some(dir) = &cfg.output_dir {
        return dir.clone();
    }
    let root = env::var_os(OUTPUT_ENV).map_or_else(|| PathBuf::from("percept-out"), PathBuf::from);
    root.join(format!("{}-seed{}", cfg.scenario, cfg.seed))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_all(
    cfg: &ScenarioConfig,
    outcome: &Outcome,
    dir: &Path,
    wall_clock_seconds: f64,
) -> Result<RunSummary, CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = vec!["trajectory.csv".to_string(), "plot.svg".to_string()];
    write(&dir.join("trajectory.csv"), &outcome.trajectory.to_csv())?;
    write(&dir.join("plot.svg"), &outcome.plot.render())?;
    for (name, table) in &outcome.extra_tables {
        write(&dir.join(name), &table.to_csv())?;
        files.push(name.clone());
    }
    files.push("summary.json".into());

    let summary = RunSummary {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        parameters: cfg.parameters.clone(),
        verdicts: outcome.verdicts.clone(),
        metrics: outcome.metrics.clone(),
        notes: outcome.notes.clone(),
        files,
        wall_clock_seconds,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    json.push('\n');
    write(&dir.join("summary.json"), &json)?;
    Ok(summary)
}
