use std::fs;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiments::{execute, Report};
use crate::CliError;

pub const METADATA_FILE: &str = "metadata.json";

/// Sidecar written next to the CSV outputs. Only `wall_time_seconds`
/// differs between identical runs.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub code_version: String,
    pub experiment: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub outputs: Vec<String>,
    pub summary: Vec<String>,
    pub wall_time_seconds: f64,
}

/// Runs the experiment and writes its CSVs plus the metadata sidecar into
/// `config.output_path`.
pub fn run(config: &ExperimentConfig) -> Result<(Report, Metadata), CliError> {
    let start = Instant::now();
    let report = execute(config)?;
    let dir = Path::new(&config.output_path);
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
    for f in &report.files {
        let path = dir.join(&f.name);
        fs::write(&path, &f.contents).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    }
    let meta = Metadata {
        code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
        experiment: config.experiment.name().into(),
        seed: config.rng_seed,
        config: ExperimentConfig {
            sweep: config.sweep_or_default(),
            ..config.clone()
        },
        outputs: report.files.iter().map(|f| f.name.clone()).collect(),
        summary: report.summary.clone(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
    };
    let path = dir.join(METADATA_FILE);
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
    Ok((report, meta))
}
