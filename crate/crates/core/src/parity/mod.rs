//! Sparse parity with a two-layer multi-head ReLU attention model.
//!
//! Hidden features `φ ∈ {±1}^d` are observed through an orthonormal
//! dictionary as `x = Gφ`; a task `(i, j)` labels examples by `φ_i φ_j`.
//! This module builds the zero-loss head constructions for `k = 2^ν₁`
//! important and `d = 2^ν₂` total coordinates, checks their loss by exact
//! enumeration and Monte Carlo, searches for the minimal head count and
//! measures the signal/noise split on finite prompts.

pub mod config;
pub mod coverage;
pub mod data;
pub mod loss;
pub mod model;
pub mod noise;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use config::{cell_probabilities, pt_threshold, task_sets, Dictionary, ParityConfig, Task};
pub use coverage::{
    bruteforce_min_heads, margin_tight_heads, pattern_coverage, uncovered_patterns, MinHeadsReport,
    Pattern,
};
pub use data::{
    sample_parity_example, sample_parity_prompt, sample_parity_task, xi_mean, ParityPrompt,
    PromptMode, TaskDistribution,
};
pub use loss::{exact_loss_breakdown, exact_population_loss, mc_population_loss, ExactLoss};
pub use model::{
    bin_digit, build_optimal, embed_model, forward, forward_infinite_n, h_eval, hinge,
    DiagonalParityModel, ModelSize, ParityModel,
};
pub use noise::{
    build_dj, decomposition_residual, loglog_slope, projection_energy_ratio, signal_vector,
    EnergyRatio, ResidualMode, ResidualStats,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParityError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid parity config: {field} {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("task ({i}, {j}) is not a pair of distinct coordinates below {d}")]
    InvalidTask { i: usize, j: usize, d: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
