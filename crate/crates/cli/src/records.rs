use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use rumi_core::rumination::{EpochMetrics, Mode};
use rumi_core::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Outcome of one (mode, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: Mode,
    pub seed: u64,
    pub dev_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub test_loss: f64,
    /// Per-epoch train and dev rows; empty for evaluation-only runs.
    #[serde(default)]
    pub curve: Vec<EpochMetrics>,
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub schema_version: u32,
    pub command: String,
    pub config_hash: String,
    pub config: Value,
    pub runs: Vec<RunRecord>,
    /// Command-specific fields (fact accuracy, target hash, cache counts).
    #[serde(default)]
    pub extra: Value,
    pub wall_clock_secs: f64,
}

impl ResultsRecord {
    /// The record with wall-clock fields zeroed, for reproducibility checks.
    pub fn without_wall_clock(&self) -> Self {
        Self { wall_clock_secs: 0.0, ..self.clone() }
    }
}

pub fn append_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    for r in rows {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

pub fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    if path.exists() {
        std::fs::remove_file(path)?;
    }
    append_jsonl(path, rows)
}

pub fn parse_results(text: &str) -> Result<Vec<ResultsRecord>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Jsonl { line: i + 1, message: e.to_string() }))
        .collect()
}

pub fn read_results(path: &Path) -> Result<Vec<ResultsRecord>> {
    parse_results(&std::fs::read_to_string(path)?)
}

/// One `metrics.jsonl` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub mode: Mode,
    pub seed: u64,
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
}

pub fn metric_rows(runs: &[RunRecord]) -> Vec<MetricRow> {
    runs.iter()
        .flat_map(|r| {
            r.curve.iter().map(move |m| MetricRow {
                mode: r.mode,
                seed: r.seed,
                epoch: m.epoch,
                split: m.split.clone(),
                loss: m.loss,
                accuracy: m.accuracy,
            })
        })
        .collect()
}
