//! Linear regression with a rank-constrained linear self-attention layer.
//!
//! Tasks draw `w ~ N(0, I)` and tokens `x ~ N(0, Λ)`; the model reads the
//! prompt through `U = W^KQ_11` and `u = w^PV_22`. This module provides the
//! trace-form population loss, its closed-form optimum under `rank(U) ≤ r`,
//! the evaluation loss on noisy prompts and the behavior gap between ranks,
//! each paired with a Monte Carlo or gradient-descent counterpart.

pub mod eval;
pub mod fit;
pub mod loss;
pub mod model;
pub mod setting;

use thiserror::Error;

use crate::numerics::NumericsError;

pub use eval::{
    behavior_gap_closed, decompose_weight, empirical_pretrain_risk, eval_loss_closed,
    eval_loss_large_n_approx, eval_loss_mc, eval_loss_terms, label_moment_closed,
    label_moment_mc, EvalLossTerms, WeightDecomposition,
};
pub use fit::{directional_fd_error, fit_rank_r, gradient_fd_check, FitResult, GdHyper, TraceLoss};
pub use loss::{
    loss_gap_norm, min_simplified_loss, optimal_diagonal, optimal_rank_r, simplified_loss,
    truncation_gap,
};
pub use model::{
    lsa_predict, sample_prompt, sample_task_weight, FactorizedLsa, LsaParams, PromptMatrix,
    ReducedLsa,
};
pub use setting::{gamma_matrix, RegressionSetting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressionError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("invalid regression setting: {0}")]
    InvalidSetting(String),
    #[error("Γ is singular (token covariance has zero trace)")]
    SingularGamma,
    #[error("rank {rank} outside [0, {dim}]")]
    InvalidRank { rank: usize, dim: usize },
    #[error("matrix has numerical rank {actual}, above the declared bound {declared}")]
    RankExceeded { declared: usize, actual: usize },
    #[error("signal has a nonzero entry at index {index}, beyond rank {rank}")]
    NotTruncated { index: usize, rank: usize },
    #[error("gradient descent diverged at step {step} (loss {loss:e})")]
    Divergence { loss: f64, step: usize },
}
