//! Command-line front end: ingestion, aggregation, forecasting, backtests and
//! comparisons, writing CSV, JSON and SVG files.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage, configuration or input
//! schema error, 3 model or evaluation failure.

use std::path::{Path, PathBuf};

pub mod app;
pub mod commands;
pub mod config;
pub mod figure;
pub mod models;

pub use app::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    /// Bad input data: schema, profile or correction tables.
    #[error("{0}")]
    Input(attrition_core::Error),
    /// A model fit, forecast or backtest failed.
    #[error("{0}")]
    Model(attrition_core::Error),
    #[error("{0}")]
    Figure(#[from] figure::FigureError),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Input(attrition_core::Error::Io(_)) | CliError::Model(attrition_core::Error::Io(_)) => 1,
            CliError::Usage(_) | CliError::Input(_) => 2,
            CliError::Model(_) | CliError::Figure(_) => 3,
        }
    }
}
