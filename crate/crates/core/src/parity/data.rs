//! Task, example and prompt sampling for sparse parity.

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, RngStream, Vector};

use super::config::{cell_probabilities, task_sets, Dictionary, ParityConfig, Task, CELLS};
use super::ParityError;

/// Task mixture: uniform on `S₁` with probability `1 − p_T`, uniform on `S₂` otherwise.
#[derive(Clone, Debug)]
pub struct TaskDistribution {
    s1: Vec<Task>,
    s2: Vec<Task>,
    p_t: f64,
}

impl TaskDistribution {
    pub fn new(cfg: &ParityConfig) -> Self {
        let (s1, s2) = task_sets(cfg.k(), cfg.d()).expect("config guarantees 2 ≤ k ≤ d");
        Self { s1, s2, p_t: cfg.p_t() }
    }

    pub fn important(&self) -> &[Task] {
        &self.s1
    }

    pub fn less_important(&self) -> &[Task] {
        &self.s2
    }

    pub fn sample(&self, rng: &mut RngStream) -> Task {
        let u = rng.uniform();
        if self.p_t > 0.0 && u < self.p_t {
            self.s2[rng.below(self.s2.len())]
        } else {
            self.s1[rng.below(self.s1.len())]
        }
    }

    pub fn sample_important(&self, rng: &mut RngStream) -> Task {
        self.s1[rng.below(self.s1.len())]
    }
}

pub fn sample_parity_task(rng: &mut RngStream, cfg: &ParityConfig) -> Task {
    TaskDistribution::new(cfg).sample(rng)
}

fn check_task(task: Task, d: usize) -> Result<(), ParityError> {
    if task.i == task.j || task.i >= d || task.j >= d {
        return Err(ParityError::InvalidTask { i: task.i, j: task.j, d });
    }
    Ok(())
}

fn check_gamma(gamma: f64) -> Result<(), ParityError> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(ParityError::InvalidConfig {
            field: "gamma",
            reason: format!("must lie in (0, 1/4), got {gamma}"),
        });
    }
    Ok(())
}

pub(crate) fn sample_cell(rng: &mut RngStream, probs: &[f64; 4]) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (c, p) in probs.iter().enumerate().take(3) {
        acc += p;
        if u < acc {
            return c;
        }
    }
    3
}

pub(crate) fn fill_example(rng: &mut RngStream, task: Task, cell: usize, phi: &mut [f64]) -> f64 {
    for v in phi.iter_mut() {
        *v = rng.sign();
    }
    let (a, b) = CELLS[cell];
    phi[task.i] = a;
    phi[task.j] = b;
    a * b
}

/// One hidden feature vector and its label `y = φ_i φ_j`.
pub fn sample_parity_example(
    rng: &mut RngStream,
    gamma: f64,
    task: Task,
    d: usize,
) -> Result<(Vector, f64), ParityError> {
    check_gamma(gamma)?;
    check_task(task, d)?;
    let cell = sample_cell(rng, &cell_probabilities(gamma));
    let mut phi = Vector::zeros(d);
    let y = fill_example(rng, task, cell, phi.as_mut_slice());
    Ok((phi, y))
}

/// How the `M` examples of a prompt are assigned to the four `(φ_i, φ_j)` cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptMode {
    /// Each example draws its cell independently.
    Iid,
    /// Cell counts are fixed to `M·p` with largest-remainder rounding.
    Balanced,
}

/// Cell counts summing to `m`, proportional to `probs`, by largest remainder.
/// Ties go to the earlier cell.
pub fn balanced_counts(m: usize, probs: &[f64; 4]) -> [usize; 4] {
    let mut counts = [0usize; 4];
    let mut rems = [(0.0f64, 0usize); 4];
    for c in 0..4 {
        let exact = m as f64 * probs[c];
        counts[c] = exact.floor() as usize;
        rems[c] = (exact - exact.floor(), c);
    }
    let assigned: usize = counts.iter().sum();
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in rems.iter().take(m.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// A length-`M` parity prompt in both hidden (`Φ`) and observed (`X = Φ Gᵀ`) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityPrompt {
    pub task: Task,
    pub phi: Matrix,
    pub x: Matrix,
    pub y: Vector,
    pub phi_query: Vector,
    pub x_query: Vector,
    pub y_query: f64,
}

impl ParityPrompt {
    pub fn examples(&self) -> usize {
        self.y.len()
    }

    pub fn dim(&self) -> usize {
        self.phi.ncols()
    }

    /// `Φᵀ y / ρ`, the label-weighted feature mean in hidden coordinates.
    pub fn hidden_context(&self, rho: f64) -> Vector {
        self.phi.tr_mul(&self.y) / rho
    }

    /// `Xᵀ y / ρ`.
    pub fn context(&self, rho: f64) -> Vector {
        self.x.tr_mul(&self.y) / rho
    }
}

pub fn sample_parity_prompt(
    rng: &mut RngStream,
    gamma: f64,
    task: Task,
    dict: &Dictionary,
    m: usize,
    mode: PromptMode,
) -> Result<ParityPrompt, ParityError> {
    check_gamma(gamma)?;
    let d = dict.dim();
    check_task(task, d)?;
    if m == 0 {
        return Err(ParityError::InvalidArgument("prompt length must be at least 1".into()));
    }
    let probs = cell_probabilities(gamma);
    let mut phi = Matrix::zeros(m, d);
    let mut y = Vector::zeros(m);
    let mut row = vec![0.0; d];
    let cells: Vec<usize> = match mode {
        PromptMode::Iid => (0..m).map(|_| sample_cell(rng, &probs)).collect(),
        PromptMode::Balanced => {
            let counts = balanced_counts(m, &probs);
            (0..4).flat_map(|c| std::iter::repeat_n(c, counts[c])).collect()
        }
    };
    for (l, &cell) in cells.iter().enumerate() {
        y[l] = fill_example(rng, task, cell, &mut row);
        phi.row_mut(l).copy_from_slice(&row);
    }
    let query_cell = sample_cell(rng, &probs);
    let mut phi_query = Vector::zeros(d);
    let y_query = fill_example(rng, task, query_cell, phi_query.as_mut_slice());
    let g = dict.matrix();
    Ok(ParityPrompt {
        task,
        x: &phi * g.transpose(),
        x_query: g * &phi_query,
        phi,
        y,
        phi_query,
        y_query,
    })
}

/// `Ξ = (1/M) Σ_l ξ_l` for `M` independent Rademacher vectors in `R^d`.
/// Each coordinate is drawn as a popcount over 64 sign bits per word.
pub fn xi_mean(rng: &mut RngStream, m: usize, d: usize) -> Result<Vector, ParityError> {
    if m == 0 || d == 0 {
        return Err(ParityError::InvalidArgument(format!("xi_mean needs M ≥ 1 and d ≥ 1, got M={m}, d={d}")));
    }
    let words = m.div_ceil(64);
    let tail = m % 64;
    Ok(Vector::from_fn(d, |_, _| {
        let mut ones = 0u32;
        for w in 0..words {
            let mut bits = rng.next_u64();
            if w + 1 == words && tail != 0 {
                bits &= (1u64 << tail) - 1;
            }
            ones += bits.count_ones();
        }
        (2.0 * ones as f64 - m as f64) / m as f64
    }))
}
