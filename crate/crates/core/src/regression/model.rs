//! Prompts, the linear self-attention predictor and its parameterisations.

use crate::numerics::linalg::check_len;
use crate::numerics::{Matrix, RngStream, Vector};

use super::setting::RegressionSetting;
use super::RegressionError;

/// Relative tolerance for numerical rank checks on `U`.
pub const RANK_TOL: f64 = 1e-8;

/// `(d+1)×(n+1)` embedding: example columns `(x_i; y_i)` followed by the
/// query column `(x_q; 0)`. The query's true label is kept alongside.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptMatrix {
    embedding: Matrix,
    query_label: f64,
}

impl PromptMatrix {
    pub fn new(xs: &Matrix, ys: &Vector, x_query: &Vector, query_label: f64) -> Result<Self, RegressionError> {
        let d = xs.nrows();
        let n = xs.ncols();
        check_len(n, ys.len(), "prompt labels")?;
        check_len(d, x_query.len(), "prompt query")?;
        let mut e = Matrix::zeros(d + 1, n + 1);
        e.view_mut((0, 0), (d, n)).copy_from(xs);
        for (j, y) in ys.iter().enumerate() {
            e[(d, j)] = *y;
        }
        e.view_mut((0, n), (d, 1)).copy_from(x_query);
        Ok(Self {
            embedding: e,
            query_label,
        })
    }

    pub fn embedding(&self) -> &Matrix {
        &self.embedding
    }

    pub fn dim(&self) -> usize {
        self.embedding.nrows() - 1
    }

    pub fn examples(&self) -> usize {
        self.embedding.ncols() - 1
    }

    pub fn query_label(&self) -> f64 {
        self.query_label
    }

    /// `d×n` matrix whose columns are the example inputs.
    pub fn inputs(&self) -> Matrix {
        self.embedding
            .view((0, 0), (self.dim(), self.examples()))
            .into_owned()
    }

    pub fn labels(&self) -> Vector {
        self.embedding
            .row(self.dim())
            .columns(0, self.examples())
            .transpose()
    }

    pub fn query(&self) -> Vector {
        self.embedding
            .column(self.examples())
            .rows(0, self.dim())
            .into_owned()
    }

    /// `Σ_i y_i x_i / ρ`, the only prompt statistic an optimal-pattern model reads.
    pub fn label_weighted_mean(&self, rho: f64) -> Vector {
        self.inputs() * self.labels() / rho
    }
}

/// Full attention parameters `(W^PV, W^KQ)`, each `(d+1)×(d+1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LsaParams {
    pub pv: Matrix,
    pub kq: Matrix,
}

impl LsaParams {
    pub fn zeros(d: usize) -> Self {
        Self {
            pv: Matrix::zeros(d + 1, d + 1),
            kq: Matrix::zeros(d + 1, d + 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.pv.nrows() - 1
    }

    /// `W^KQ_11`.
    pub fn kq11(&self) -> Matrix {
        let d = self.dim();
        self.kq.view((0, 0), (d, d)).into_owned()
    }

    /// `w^PV_22`.
    pub fn pv22(&self) -> f64 {
        let d = self.dim();
        self.pv[(d, d)]
    }

    /// Recover `(U, u)` from the block pattern of an optimal solution.
    pub fn to_reduced(&self, declared_rank: usize) -> Result<ReducedLsa, RegressionError> {
        ReducedLsa::new(self.kq11(), self.pv22(), declared_rank)
    }
}

/// Reduced parameters `U = W^KQ_11`, `u = w^PV_22` with a declared rank bound.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedLsa {
    kq: Matrix,
    pv: f64,
    declared_rank: usize,
}

impl ReducedLsa {
    pub fn new(kq: Matrix, pv: f64, declared_rank: usize) -> Result<Self, RegressionError> {
        if kq.nrows() != kq.ncols() {
            return Err(RegressionError::Numerics(
                crate::numerics::NumericsError::NotSquare {
                    what: "reduced attention matrix",
                    rows: kq.nrows(),
                    cols: kq.ncols(),
                },
            ));
        }
        if declared_rank > kq.nrows() {
            return Err(RegressionError::InvalidRank {
                rank: declared_rank,
                dim: kq.nrows(),
            });
        }
        let rank = rank_with_tol(&kq);
        if rank > declared_rank {
            return Err(RegressionError::RankExceeded {
                declared: declared_rank,
                actual: rank,
            });
        }
        if pv == 0.0 && kq.iter().any(|v| *v != 0.0) {
            return Err(RegressionError::InvalidSetting(
                "u must be nonzero when U is nonzero".into(),
            ));
        }
        Ok(Self {
            kq,
            pv,
            declared_rank,
        })
    }

    pub fn zero(d: usize) -> Self {
        Self {
            kq: Matrix::zeros(d, d),
            pv: 0.0,
            declared_rank: 0,
        }
    }

    /// `U`.
    pub fn kq(&self) -> &Matrix {
        &self.kq
    }

    /// `u`.
    pub fn pv(&self) -> f64 {
        self.pv
    }

    pub fn declared_rank(&self) -> usize {
        self.declared_rank
    }

    pub fn dim(&self) -> usize {
        self.kq.nrows()
    }

    /// `uU`, the only combination the loss depends on.
    pub fn effective(&self) -> Matrix {
        &self.kq * self.pv
    }

    /// Place `U` and `u` into otherwise-zero full parameter matrices.
    pub fn embed(&self) -> LsaParams {
        let d = self.dim();
        let mut p = LsaParams::zeros(d);
        p.kq.view_mut((0, 0), (d, d)).copy_from(&self.kq);
        p.pv[(d, d)] = self.pv;
        p
    }

    /// Prediction of an optimal-pattern model: `u (Σ y_i x_i / ρ)ᵀ U x_q`.
    pub fn predict(&self, prompt: &PromptMatrix, rho: f64) -> f64 {
        let m = prompt.label_weighted_mean(rho);
        self.pv * m.dot(&(&self.kq * prompt.query()))
    }
}

fn rank_with_tol(m: &Matrix) -> usize {
    crate::numerics::linalg::numerical_rank_with_tol(m, RANK_TOL)
}

/// `U = A Bᵀ` with `A, B ∈ R^{d×r}`, so `rank(U) ≤ r` holds by construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorizedLsa {
    pub a: Matrix,
    pub b: Matrix,
    pub u: f64,
}

impl FactorizedLsa {
    pub fn rank_bound(&self) -> usize {
        self.a.ncols()
    }

    pub fn kq(&self) -> Matrix {
        &self.a * self.b.transpose()
    }

    pub fn to_reduced(&self) -> Result<ReducedLsa, RegressionError> {
        ReducedLsa::new(self.kq(), self.u, self.rank_bound())
    }

    pub fn random(rng: &mut RngStream, d: usize, r: usize, scale: f64) -> Self {
        Self {
            a: Matrix::from_fn(d, r, |_, _| scale * rng.gauss()),
            b: Matrix::from_fn(d, r, |_, _| scale * rng.gauss()),
            u: 1.0,
        }
    }
}

/// Bottom-right entry of the attention output:
/// `((w^PV_21)ᵀ, w^PV_22) (E Eᵀ / ρ) [W^KQ_11; (w^KQ_21)ᵀ] x_q`.
pub fn lsa_predict(params: &LsaParams, prompt: &PromptMatrix, rho: f64) -> Result<f64, RegressionError> {
    if rho <= 0.0 || !rho.is_finite() {
        return Err(RegressionError::InvalidSetting(format!(
            "normaliser must be positive, got {rho}"
        )));
    }
    let d = prompt.dim();
    check_len(d, params.dim(), "attention parameters")?;
    let e = prompt.embedding();
    let gram = e * e.transpose() / rho;
    let pv_row = params.pv.row(d);
    let kq_cols = params.kq.columns(0, d);
    let x_q = prompt.query();
    let value = pv_row * gram * kq_cols * x_q;
    Ok(value[(0, 0)])
}

/// Task weight `w ~ N(0, I_d)`.
pub fn sample_task_weight(rng: &mut RngStream, d: usize) -> Result<Vector, RegressionError> {
    Ok(crate::numerics::gauss_vector(rng, d)?)
}

/// Prompt with `n` examples `x_i ~ N(0, Λ)` and labels `⟨w, x_i⟩ + ε_i`,
/// `ε_i ~ N(0, σ²)`. The query label slot is zero and the noiseless query
/// label `⟨w, x_q⟩` is returned with the prompt.
pub fn sample_prompt(
    rng: &mut RngStream,
    setting: &RegressionSetting,
    w: &Vector,
    n: usize,
    sigma: f64,
) -> Result<PromptMatrix, RegressionError> {
    if n == 0 {
        return Err(RegressionError::InvalidSetting(
            "prompt needs at least one example".into(),
        ));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(RegressionError::InvalidSetting(format!(
            "label noise must be nonnegative, got {sigma}"
        )));
    }
    let d = setting.dim();
    check_len(d, w.len(), "task weight")?;
    let cov = setting.cov();
    let factor = cov.sqrt_factor();
    let mut xs = Matrix::zeros(d, n);
    let mut ys = Vector::zeros(n);
    let mut buf = vec![0.0; d];
    for j in 0..n {
        cov.sample_into(&factor, rng, &mut buf);
        xs.column_mut(j).copy_from_slice(&buf);
        let clean: f64 = buf.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        ys[j] = if sigma > 0.0 {
            clean + sigma * rng.gauss()
        } else {
            clean
        };
    }
    cov.sample_into(&factor, rng, &mut buf);
    let x_q = Vector::from_column_slice(&buf);
    let y_q = x_q.dot(w);
    PromptMatrix::new(&xs, &ys, &x_q, y_q)
}
