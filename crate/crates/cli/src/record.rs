use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Provenance of one command invocation. Kept out of the metric files so
/// those stay bitwise reproducible; only this record carries wall-clock time.
#[derive(Debug, Serialize)]
pub struct RunRecord {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub artifacts: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
}

/// Output paths claimed up front, so an existing file fails the command
/// before any work is done.
pub struct Outputs {
    force: bool,
    paths: Vec<PathBuf>,
    record: PathBuf,
    started: Instant,
}

impl Outputs {
    /// `record` is where the run record goes; it is guarded like any artifact.
    pub fn new(force: bool, record: PathBuf) -> Self {
        Self {
            force,
            paths: Vec::new(),
            record,
            started: Instant::now(),
        }
    }

    /// Record file next to a single-file artifact: `metrics.csv.run.json`.
    pub fn beside(file: &Path) -> PathBuf {
        let mut name = file.as_os_str().to_owned();
        name.push(".run.json");
        PathBuf::from(name)
    }

    fn check(&self, path: &Path) -> Result<()> {
        if path.exists() && !self.force {
            bail!("{} already exists; pass --force to overwrite", path.display());
        }
        Ok(())
    }

    pub fn claim(&mut self, path: PathBuf) -> Result<PathBuf> {
        self.check(&path)?;
        self.check(&self.record)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        self.paths.push(path.clone());
        Ok(path)
    }

    pub fn finish(self, command: &str, seed: u64, config: serde_json::Value) -> Result<()> {
        let text = serde_json::to_string(&config)?;
        let run_id = run_id(command, seed, &text);
        let record = RunRecord {
            run_id,
            command: command.into(),
            seed,
            config,
            artifacts: self.paths,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        if let Some(dir) = self.record.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&self.record, serde_json::to_string_pretty(&record)? + "\n")
            .with_context(|| format!("writing {}", self.record.display()))
    }
}

/// Deterministic id from the command, seed and effective config.
pub fn run_id(command: &str, seed: u64, config_json: &str) -> String {
    format!("{command}-{:016x}", qgnn::seed::derive_seed(seed, config_json))
}
