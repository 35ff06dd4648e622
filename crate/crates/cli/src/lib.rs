//! Command-line runner: reads a JSON run configuration, executes one
//! experiment and writes a result record, CSV tables and field dumps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};

use gauss_plap::analysis::AnalysisError;
use gauss_plap::mesh::MeshError;
use gauss_plap::oracles::OracleError;
use gauss_plap::SolverError;
use thiserror::Error;

pub mod config;
pub mod record;
pub mod run;

pub use config::{Experiment, Problem, RunConfig};
pub use record::{emit_field, ResultRecord};
pub use run::{run, Outcome};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "GPLAP_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read config {path}: {source}")]
    ConfigRead { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    ConfigParse(serde_json::Error),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{0}")]
    Experiment(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
