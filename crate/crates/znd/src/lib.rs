//! Experiment drivers, file formats and command line for the reacting
//! front-tracking solver in [`znd_core`].
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod io;
pub mod presets;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("solver error: {0}")]
    Solver(#[from] znd_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for bad input, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Solver(_) => 3,
            _ => 2,
        }
    }
}
