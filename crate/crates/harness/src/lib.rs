//! Monte-Carlo experiment runner for per-layer MIMO modulation
//! classification and detection: config parsing, seeded parallel sweeps
//! and CSV output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod report;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, DetectorKind, ExperimentConfig};
pub use experiment::{count_ops_report, run_ccr_experiment, run_ser_experiment, OpsRow, RunReport};
pub use report::{render_csv, MetricRow, CSV_HEADER};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame synthesis: {0}")]
    Channel(#[from] mimo_mc::channel::ChannelError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub fn numerical(e: impl std::fmt::Display) -> Self {
        HarnessError::Numerical(e.to_string())
    }

    /// Process exit status: 2 for configuration problems, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Channel(_) => 2,
            HarnessError::Numerical(_) => 3,
            HarnessError::Io { .. } | HarnessError::Pool(_) => 1,
        }
    }
}
