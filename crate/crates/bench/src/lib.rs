//! Monte-Carlo experiments, analytic checks and the command-line driver for
//! the beamformer-count analysis in `isac-core`.
//!
//! Trials are seeded per index, run in parallel and aggregated in index
//! order, so output files depend only on the configuration.

// Validation is written as `!(x > 0.0)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod scenario;
pub mod trial;
pub mod verify;

use std::path::PathBuf;

use isac_core::channel::ChannelError;
use thiserror::Error;

/// Errors of the experiment driver.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{targets} targets requested but the grid has {grid} usable angles")]
    GridExhausted { targets: usize, grid: usize },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
