//! Run manifests written next to every output.

use std::path::{Path, PathBuf};
use std::time::Instant;

use ccl_core::LearnReport;
use serde::Serialize;
use serde_json::Value;

use crate::pipeline::MetricRow;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Arguments that reproduce the run, seed included.
    pub command: Vec<String>,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub seed: u64,
    pub duration_ms: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub reports: Vec<ReportEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub metrics: Vec<MetricEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct ReportEntry {
    pub stage: String,
    pub summary: String,
    pub report: LearnReport,
}

#[derive(Debug, Serialize)]
pub struct MetricEntry {
    pub stage: String,
    #[serde(flatten)]
    pub row: MetricRow,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: Value) -> Self {
        Self {
            subcommand: subcommand.into(),
            command: rerun_command(seed),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            seed,
            duration_ms: 0,
            reports: Vec::new(),
            metrics: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn finish(&mut self, started: Instant) {
        self.duration_ms = started.elapsed().as_millis() as u64;
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::failure(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
    }
}

/// `<file>.manifest.json` beside `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// The invocation with `--seed` made explicit.
fn rerun_command(seed: u64) -> Vec<String> {
    let mut args: Vec<String> = std::env::args().collect();
    if !args.iter().any(|a| a == "--seed" || a.starts_with("--seed=")) {
        args.push("--seed".into());
        args.push(seed.to_string());
    }
    args
}

pub fn display(path: &Path) -> String {
    path.display().to_string()
}
