//! Scenario runner for the Finsler capacity toolkit.

pub mod config;
pub mod pipeline;
pub mod study;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{Check, Scenario};
pub use pipeline::{run_scenario, summary_csv, Outcome, SummaryRow};
pub use study::{convergence_study, StudyRow};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    /// 1 for failed checks, 2 when a scenario cannot be set up.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Check(_) | RunError::Io(_) => 1,
            RunError::Config(_) | RunError::Geometry(_) => 2,
        }
    }
}

/// Result of running one scenario file.
#[derive(Debug)]
pub struct FileResult {
    pub path: PathBuf,
    pub outcome: Result<Outcome, RunError>,
}

impl FileResult {
    pub fn exit_code(&self) -> i32 {
        match &self.outcome {
            Ok(o) if o.failures.is_empty() => 0,
            Ok(_) => 1,
            Err(e) => e.exit_code(),
        }
    }
}

/// Loads a scenario and applies command-line overrides.
pub fn load_scenario(path: &Path, seed: Option<u64>, only: Option<&[Check]>) -> Result<Scenario, RunError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(checks) = only {
        s.checks = checks.to_vec();
    }
    Ok(s)
}

/// Runs every file on the current rayon pool; results keep input order and a
/// combined `summary.csv` is written to `out`.
pub fn run_files(paths: &[PathBuf], out: &Path, seed: Option<u64>, only: Option<&[Check]>) -> Result<Vec<FileResult>, RunError> {
    std::fs::create_dir_all(out).map_err(|e| RunError::Io(format!("{}: {e}", out.display())))?;
    let results: Vec<FileResult> = paths
        .par_iter()
        .map(|p| FileResult {
            path: p.clone(),
            outcome: load_scenario(p, seed, only).and_then(|s| run_scenario(&s, out)),
        })
        .collect();
    let rows: Vec<SummaryRow> = results.iter().filter_map(|r| r.outcome.as_ref().ok()).map(|o| o.summary.clone()).collect();
    let path = out.join("summary.csv");
    std::fs::write(&path, summary_csv(&rows)).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    Ok(results)
}

/// Worst exit code over all files (0 when every scenario passed).
pub fn exit_code(results: &[FileResult]) -> i32 {
    results.iter().map(FileResult::exit_code).max().unwrap_or(0)
}
