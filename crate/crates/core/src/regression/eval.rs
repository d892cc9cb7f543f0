//! Evaluation-time losses of optimal models on noisy prompts, closed forms
//! and Monte Carlo estimates.

use crate::numerics::linalg::check_len;
use crate::numerics::montecarlo::{self, MeanEstimate};
use crate::numerics::spectral::MAX_DIM;
use crate::numerics::{Matrix, RngStream, Vector};

use super::loss::optimal_diagonal;
use super::model::{lsa_predict, sample_prompt, sample_task_weight, LsaParams, ReducedLsa};
use super::setting::RegressionSetting;
use super::RegressionError;

/// Task weight split in the eigenbasis, `w = Q (s + ξ)`: `s` keeps the first
/// `r` coordinates, `ξ` the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDecomposition {
    pub signal: Vector,
    pub residual: Vector,
    pub split: usize,
}

impl WeightDecomposition {
    /// Build directly from eigen-coordinates `c = Qᵀw`.
    pub fn from_coordinates(coords: &Vector, split: usize) -> Result<Self, RegressionError> {
        let d = coords.len();
        if split > d {
            return Err(RegressionError::InvalidRank { rank: split, dim: d });
        }
        let signal = Vector::from_fn(d, |i, _| if i < split { coords[i] } else { 0.0 });
        let residual = Vector::from_fn(d, |i, _| if i < split { 0.0 } else { coords[i] });
        Ok(Self {
            signal,
            residual,
            split,
        })
    }

    pub fn coordinates(&self) -> Vector {
        &self.signal + &self.residual
    }

    pub fn weight(&self, setting: &RegressionSetting) -> Vector {
        setting.cov().basis() * self.coordinates()
    }
}

pub fn decompose_weight(
    w: &Vector,
    setting: &RegressionSetting,
    r: usize,
) -> Result<WeightDecomposition, RegressionError> {
    check_len(setting.dim(), w.len(), "task weight")?;
    let coords = setting.cov().basis().transpose() * w;
    WeightDecomposition::from_coordinates(&coords, r)
}

/// The four additive terms of the closed-form evaluation loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalLossTerms {
    /// `(1/M) ‖s‖²_{V*² D³}`
    pub signal_variance: f64,
    /// `(1/M) (‖s+ξ‖²_D + σ²) tr(V*² D²)`
    pub noise_variance: f64,
    /// `‖ξ‖²_D`
    pub uncovered: f64,
    /// `Σ_{i≤r} s_i² λ_i (λ_i v*_i − 1)²`
    pub shrinkage_bias: f64,
}

impl EvalLossTerms {
    pub fn total(&self) -> f64 {
        self.signal_variance + self.noise_variance + self.uncovered + self.shrinkage_bias
    }
}

fn check_eval_args(m: usize, sigma: f64) -> Result<(), RegressionError> {
    if m == 0 {
        return Err(RegressionError::InvalidSetting(
            "evaluation prompt needs at least one example".into(),
        ));
    }
    if sigma < 0.0 || !sigma.is_finite() {
        return Err(RegressionError::InvalidSetting(format!(
            "label noise must be nonnegative, got {sigma}"
        )));
    }
    Ok(())
}

pub fn eval_loss_terms(
    setting: &RegressionSetting,
    m: usize,
    r: usize,
    decomp: &WeightDecomposition,
    sigma: f64,
) -> Result<EvalLossTerms, RegressionError> {
    check_eval_args(m, sigma)?;
    if decomp.split != r {
        return Err(RegressionError::InvalidSetting(format!(
            "decomposition split {} does not match model rank {r}",
            decomp.split
        )));
    }
    check_len(setting.dim(), decomp.signal.len(), "weight decomposition")?;
    let v = optimal_diagonal(setting, r)?;
    let lam = setting.eigenvalues();
    let s = &decomp.signal;
    let xi = &decomp.residual;
    let inv_m = 1.0 / m as f64;
    let d = setting.dim();

    let mut signal_variance = 0.0;
    let mut full_norm = 0.0;
    let mut trace_v2d2 = 0.0;
    let mut uncovered = 0.0;
    let mut shrinkage_bias = 0.0;
    for i in 0..d {
        let l = lam[i];
        signal_variance += s[i] * s[i] * v[i] * v[i] * l * l * l;
        full_norm += (s[i] + xi[i]).powi(2) * l;
        trace_v2d2 += v[i] * v[i] * l * l;
        uncovered += xi[i] * xi[i] * l;
        if i < r {
            shrinkage_bias += s[i] * s[i] * l * (l * v[i] - 1.0).powi(2);
        }
    }
    Ok(EvalLossTerms {
        signal_variance: inv_m * signal_variance,
        noise_variance: inv_m * (full_norm + sigma * sigma) * trace_v2d2,
        uncovered,
        shrinkage_bias,
    })
}

/// Closed-form evaluation loss of the optimal rank-`r` model.
pub fn eval_loss_closed(
    setting: &RegressionSetting,
    m: usize,
    r: usize,
    decomp: &WeightDecomposition,
    sigma: f64,
) -> Result<f64, RegressionError> {
    Ok(eval_loss_terms(setting, m, r, decomp, sigma)?.total())
}

/// Monte Carlo estimate of `E (f(Ê) − ⟨w, x_q⟩)²` over fresh length-`M`
/// prompts with label noise `σ`, using normaliser `ρ = M`.
pub fn eval_loss_mc(
    rng: &RngStream,
    lsa: &ReducedLsa,
    setting: &RegressionSetting,
    w: &Vector,
    m: usize,
    sigma: f64,
    trials: usize,
) -> Result<MeanEstimate, RegressionError> {
    check_eval_args(m, sigma)?;
    if trials == 0 {
        return Err(RegressionError::InvalidSetting("trials must be at least 1".into()));
    }
    let d = setting.dim();
    check_len(d, w.len(), "task weight")?;
    check_len(d, lsa.dim(), "model")?;
    let cov = setting.cov();
    let factor = cov.sqrt_factor();
    // Prediction is aᵀ (uU) x_q with a = Σ y_l x_l / M.
    let eff = lsa.effective();
    let rho = m as f64;
    let moments = montecarlo::run(rng, trials, 1, |s, out| {
        let mut acc = [0.0f64; MAX_DIM];
        let mut x = [0.0f64; MAX_DIM];
        for _ in 0..m {
            cov.sample_into(&factor, s, &mut x[..d]);
            let mut y = 0.0;
            for i in 0..d {
                y += w[i] * x[i];
            }
            if sigma > 0.0 {
                y += sigma * s.gauss();
            }
            for i in 0..d {
                acc[i] += y * x[i];
            }
        }
        cov.sample_into(&factor, s, &mut x[..d]);
        let mut pred = 0.0;
        let mut truth = 0.0;
        for i in 0..d {
            let mut ux = 0.0;
            for j in 0..d {
                ux += eff[(i, j)] * x[j];
            }
            pred += acc[i] / rho * ux;
            truth += w[i] * x[i];
        }
        out.push((pred - truth).powi(2));
    });
    Ok(moments.estimate(0))
}

/// Loss increase from the optimal rank-`r` model to the optimal rank-`r'`
/// model when the task weight lies in the top `r` eigendirections:
/// `(1/M)(‖s‖²_D + σ²) Σ_{i=r+1}^{r'} (N λ_i / ((N+1) λ_i + tr D))²`.
pub fn behavior_gap_closed(
    setting: &RegressionSetting,
    m: usize,
    r: usize,
    r_prime: usize,
    signal: &Vector,
    sigma: f64,
) -> Result<f64, RegressionError> {
    check_eval_args(m, sigma)?;
    let d = setting.dim();
    if r > r_prime || r_prime > d {
        return Err(RegressionError::InvalidSetting(format!(
            "ranks must satisfy 0 <= r <= r' <= d, got r={r}, r'={r_prime}, d={d}"
        )));
    }
    check_len(d, signal.len(), "truncated signal")?;
    if let Some(i) = (r..d).find(|&i| signal[i] != 0.0) {
        return Err(RegressionError::NotTruncated { index: i, rank: r });
    }
    let tr = setting.cov().trace();
    if tr <= 0.0 {
        return Err(RegressionError::SingularGamma);
    }
    let n = setting.n_pretrain() as f64;
    let lam = setting.eigenvalues();
    let s_norm: f64 = (0..d).map(|i| signal[i] * signal[i] * lam[i]).sum();
    let sum: f64 = (r..r_prime)
        .map(|i| (n * lam[i] / ((n + 1.0) * lam[i] + tr)).powi(2))
        .fold(0.0, |acc, v| acc + v); // an empty f64 sum is -0.0
    Ok((s_norm + sigma * sigma) * sum / m as f64)
}

/// Long-pretraining approximation
/// `‖ξ‖²_D + (1/M)((r+1)‖s‖²_D + r‖ξ‖²_D + rσ²)`.
pub fn eval_loss_large_n_approx(
    setting: &RegressionSetting,
    m: usize,
    r: usize,
    decomp: &WeightDecomposition,
    sigma: f64,
) -> Result<f64, RegressionError> {
    check_eval_args(m, sigma)?;
    if decomp.split != r {
        return Err(RegressionError::InvalidSetting(format!(
            "decomposition split {} does not match model rank {r}",
            decomp.split
        )));
    }
    let lam = setting.eigenvalues();
    let s_norm: f64 = decomp.signal.iter().zip(lam.iter()).map(|(s, l)| s * s * l).sum();
    let xi_norm: f64 = decomp.residual.iter().zip(lam.iter()).map(|(x, l)| x * x * l).sum();
    let rf = r as f64;
    Ok(xi_norm + ((rf + 1.0) * s_norm + rf * xi_norm + rf * sigma * sigma) / m as f64)
}

/// Half squared query error averaged over `prompts` freshly sampled tasks
/// `w ~ N(0, I)` and noiseless length-`N` prompts, predicted with the full
/// parameterisation at `ρ = N`. The mean of the returned estimate is the
/// empirical pretraining risk.
pub fn empirical_pretrain_risk(
    rng: &RngStream,
    params: &LsaParams,
    setting: &RegressionSetting,
    prompts: usize,
) -> Result<MeanEstimate, RegressionError> {
    if prompts == 0 {
        return Err(RegressionError::InvalidSetting("prompt count must be at least 1".into()));
    }
    let d = setting.dim();
    check_len(d, params.dim(), "attention parameters")?;
    let n = setting.n_pretrain();
    let rho = n as f64;
    let errs: Vec<Result<f64, RegressionError>> = montecarlo::collect(rng, prompts, |s| {
        let w = sample_task_weight(s, d)?;
        let p = sample_prompt(s, setting, &w, n, 0.0)?;
        let pred = lsa_predict(params, &p, rho)?;
        Ok(0.5 * (pred - p.query_label()).powi(2))
    });
    let mut moments = crate::numerics::Moments::new(1);
    for e in errs {
        moments.push(&[e?]);
    }
    Ok(moments.estimate(0))
}

/// `E[y² x xᵀ] = (σ² + ‖w‖²_Λ) Λ + 2 Λ w wᵀ Λ` for `x ~ N(0, Λ)`,
/// `y = ⟨w, x⟩ + ε`.
pub fn label_moment_closed(setting: &RegressionSetting, w: &Vector, sigma: f64) -> Result<Matrix, RegressionError> {
    check_len(setting.dim(), w.len(), "task weight")?;
    let lambda = setting.lambda();
    let lw = &lambda * w;
    let wnorm = w.dot(&lw);
    Ok(&lambda * (sigma * sigma + wnorm) + (&lw * lw.transpose()) * 2.0)
}

/// Entrywise Monte Carlo estimate of `E[y² x xᵀ]`, returned as (mean, stderr).
pub fn label_moment_mc(
    rng: &RngStream,
    setting: &RegressionSetting,
    w: &Vector,
    sigma: f64,
    samples: usize,
) -> Result<(Matrix, Matrix), RegressionError> {
    let d = setting.dim();
    check_len(d, w.len(), "task weight")?;
    if samples == 0 {
        return Err(RegressionError::InvalidSetting("samples must be at least 1".into()));
    }
    let cov = setting.cov();
    let factor = cov.sqrt_factor();
    let moments = montecarlo::run(rng, samples, d * d, |s, out| {
        let mut x = [0.0f64; MAX_DIM];
        cov.sample_into(&factor, s, &mut x[..d]);
        let mut y: f64 = (0..d).map(|i| w[i] * x[i]).sum();
        if sigma > 0.0 {
            y += sigma * s.gauss();
        }
        for j in 0..d {
            for i in 0..d {
                out.push(y * y * x[i] * x[j]);
            }
        }
    });
    let mean = Matrix::from_fn(d, d, |i, j| moments.estimate(j * d + i).mean);
    let stderr = Matrix::from_fn(d, d, |i, j| moments.estimate(j * d + i).stderr);
    Ok((mean, stderr))
}
