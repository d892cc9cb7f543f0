//! Exact and Monte Carlo population hinge loss.

use serde::Serialize;

use crate::numerics::montecarlo::run;
use crate::numerics::{MeanEstimate, RngStream, Vector};

use super::config::{cell_probabilities, task_sets, Dictionary, ParityConfig, Task, CELLS};
use super::data::{fill_example, sample_cell, TaskDistribution};
use super::model::{hinge, DiagonalParityModel, ParityModel};
use super::ParityError;

/// Mean over `tasks` of the cell-weighted infinite-prompt hinge loss.
pub fn exact_task_set_loss(diag: &DiagonalParityModel, gamma: f64, tasks: &[Task]) -> f64 {
    if tasks.is_empty() {
        return 0.0;
    }
    let probs = cell_probabilities(gamma);
    let total: f64 = tasks
        .iter()
        .map(|&t| {
            CELLS
                .iter()
                .zip(probs)
                .map(|(&(a, b), p)| p * hinge(a * b * diag.forward_infinite_n(t, a, b, gamma)))
                .sum::<f64>()
        })
        .sum();
    total / tasks.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExactLoss {
    pub important: f64,
    pub less_important: f64,
    pub total: f64,
}

/// Infinite-prompt population loss, split by task set:
/// `total = (1 − p_T)·important + p_T·less_important`.
pub fn exact_loss_breakdown(diag: &DiagonalParityModel, cfg: &ParityConfig) -> ExactLoss {
    let (s1, s2) = task_sets(cfg.k(), cfg.d()).expect("config guarantees 2 ≤ k ≤ d");
    let important = exact_task_set_loss(diag, cfg.gamma(), &s1);
    let less_important = exact_task_set_loss(diag, cfg.gamma(), &s2);
    let p = cfg.p_t();
    ExactLoss {
        important,
        less_important,
        total: (1.0 - p) * important + p * less_important,
    }
}

pub fn exact_population_loss(diag: &DiagonalParityModel, cfg: &ParityConfig) -> f64 {
    exact_loss_breakdown(diag, cfg).total
}

/// Monte Carlo hinge loss on length-`n` prompts with `ρ = n`. Examples are
/// streamed into `Σ y_l φ_l` rather than stored, then mapped through `G`.
pub fn mc_population_loss(
    rng: &RngStream,
    model: &ParityModel,
    dict: &Dictionary,
    cfg: &ParityConfig,
    n: usize,
    trials: usize,
) -> Result<MeanEstimate, ParityError> {
    if n == 0 || trials == 0 {
        return Err(ParityError::InvalidArgument(format!("need N ≥ 1 and trials ≥ 1, got N={n}, trials={trials}")));
    }
    let d = cfg.d();
    if dict.dim() != d || (model.heads() > 0 && model.dim() != d) {
        return Err(ParityError::DimensionMismatch { expected: d, got: dict.dim() });
    }
    let tasks = TaskDistribution::new(cfg);
    let probs = cell_probabilities(cfg.gamma());
    let g = dict.matrix();
    let moments = run(rng, trials, 1, |s, out| {
        let task = tasks.sample(s);
        let mut acc = Vector::zeros(d);
        let mut phi = vec![0.0; d];
        for _ in 0..n {
            let cell = sample_cell(s, &probs);
            let y = fill_example(s, task, cell, &mut phi);
            for (a, p) in acc.iter_mut().zip(&phi) {
                *a += y * p;
            }
        }
        let cell = sample_cell(s, &probs);
        let y_q = fill_example(s, task, cell, &mut phi);
        let context = g * (acc / n as f64);
        let x_q = g * Vector::from_column_slice(&phi);
        let out_val = model.forward_context(&context, &x_q).expect("dimensions checked");
        out.push(hinge(y_q * out_val));
    });
    Ok(moments.estimate(0))
}
