//! Batch front end: reads a JSON job, runs it and renders the result.
//!
//! Exit status is 0 on success (property checks that fail are reported in
//! the payload, not through the status), 2 for configuration and parse
//! errors and 3 for errors raised by an engine.

pub mod config;
mod jobs;
mod suites;

use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

pub use config::{EngineName, Format, JobConfig};
pub use jobs::{run, Command, Invocation};
pub use suites::{run_suites, SUITE_NAMES};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] gfield::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use gfield::Error as E;
        match self {
            CliError::Schema(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => match e {
                E::Parse { .. } | E::InvalidParams(_) | E::InvalidInput(_) | E::Geometry(_) | E::NotPsd { .. } | E::NotAdapted(_) => 2,
                E::Cfl { .. } | E::DimensionTooLarge { .. } | E::NonFinite(_) => 3,
            },
        }
    }
}

/// Rendered output of one job.
#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub content: String,
}

impl Artifact {
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(&self.file_name);
        std::fs::write(&path, &self.content).map_err(|source| CliError::Io { path: path.clone(), source })?;
        Ok(path)
    }
}

/// One numeric result.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub label: String,
    pub value_upper: f64,
    pub value_lower: f64,
    pub engine: String,
    pub grid_descriptor: String,
    pub runtime_ms: f64,
}
