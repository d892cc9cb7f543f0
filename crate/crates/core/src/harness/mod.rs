//! Command-line front end: JSON configs, sweeps that write CSV tables and a
//! manifest, the verification suites and SVG line charts.

pub mod config;
pub mod output;
pub mod plot;
pub mod sweep;
pub mod verify;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::parity::ParityError;
use crate::regression::RegressionError;

pub use config::{load_config, parse_config, Experiment, ParityParams, RegressionParams, ResidualModeName, RunConfig};
pub use output::{format_float, RunManifest, Table};
pub use plot::{emit_plot, PlotSpec};
pub use sweep::{run_parity_sweep, run_regression_sweep};
pub use verify::{run_verify, SuiteFilter, VerifyOptions, VerifyReport};

/// Exit status for a verification failure.
pub const EXIT_VERIFY_FAILED: u8 = 1;
/// Exit status for an invalid config, argument or input table.
pub const EXIT_CONFIG: u8 = 2;
/// Exit status for a filesystem failure.
pub const EXIT_IO: u8 = 3;

/// Env var overriding the `threads` config field.
pub const THREADS_ENV: &str = "ICL_LAB_THREADS";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Regression(#[from] RegressionError),
    #[error(transparent)]
    Parity(#[from] ParityError),
}

impl HarnessError {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        HarnessError::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Io { .. } => EXIT_IO,
            _ => EXIT_CONFIG,
        }
    }
}

/// Resolve the worker count: `ICL_LAB_THREADS` wins over the config field,
/// which wins over the number of available cores.
pub fn resolve_threads(configured: Option<usize>) -> Result<usize, HarnessError> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        return match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(HarnessError::config(THREADS_ENV, format!("must be a positive integer, got {raw:?}"))),
        };
    }
    match configured {
        Some(0) => Err(HarnessError::config("threads", "must be at least 1")),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
