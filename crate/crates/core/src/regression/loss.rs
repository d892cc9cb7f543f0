//! Population pretraining loss in trace form and its rank-constrained optimum.

use crate::numerics::Matrix;
use crate::numerics::Vector;

use super::model::ReducedLsa;
use super::setting::{gamma_matrix, RegressionSetting};
use super::RegressionError;

/// `tr[½ u² Γ Λ U Λ Uᵀ − u Λ² Uᵀ]`.
pub fn simplified_loss(kq: &Matrix, pv: f64, setting: &RegressionSetting) -> f64 {
    let lambda = setting.lambda();
    let gamma = gamma_matrix(setting);
    let quad = &gamma * &lambda * kq * &lambda * kq.transpose();
    let lin = &lambda * &lambda * kq.transpose();
    0.5 * pv * pv * quad.trace() - pv * lin.trace()
}

/// Unconstrained minimum `−½ tr(Λ² Γ^{-1})`.
pub fn min_simplified_loss(setting: &RegressionSetting) -> Result<f64, RegressionError> {
    let gamma_eigs = setting.gamma_eigenvalues();
    if setting.cov().trace() <= 0.0 {
        return Err(RegressionError::SingularGamma);
    }
    Ok(-0.5
        * setting
            .eigenvalues()
            .iter()
            .zip(gamma_eigs.iter())
            .map(|(l, g)| l * l / g)
            .sum::<f64>())
}

/// Excess loss over the unconstrained minimum in Frobenius form,
/// `½ ‖Γ^{1/2} (u Λ^{1/2} U Λ^{1/2} − Λ Γ^{-1})‖_F²`.
pub fn loss_gap_norm(kq: &Matrix, pv: f64, setting: &RegressionSetting) -> Result<f64, RegressionError> {
    let gamma_inv = setting.gamma_inverse()?;
    let cov = setting.cov();
    let n = setting.n_pretrain() as f64;
    let tr = cov.trace();
    let gamma_half = cov.spectral_map(|l| ((1.0 + 1.0 / n) * l + tr / n).sqrt());
    let lambda_half = cov.spectral_map(f64::sqrt);
    let lambda = cov.materialize();
    let inner = &lambda_half * kq * &lambda_half * pv - lambda * gamma_inv;
    Ok(0.5 * (gamma_half * inner).norm_squared())
}

/// Diagonal of `V*` for the optimal rank-`r` model:
/// `v*_i = N / ((N+1) λ_i + tr(D))` for `i ≤ r`, zero beyond.
pub fn optimal_diagonal(setting: &RegressionSetting, r: usize) -> Result<Vector, RegressionError> {
    let d = setting.dim();
    if r > d {
        return Err(RegressionError::InvalidRank { rank: r, dim: d });
    }
    let tr = setting.cov().trace();
    if tr <= 0.0 {
        return Err(RegressionError::SingularGamma);
    }
    let n = setting.n_pretrain() as f64;
    Ok(Vector::from_iterator(
        d,
        setting
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(i, l)| if i < r { n / ((n + 1.0) * l + tr) } else { 0.0 }),
    ))
}

/// Optimal rank-`r` solution with the scale gauge fixed to `u = 1`:
/// `U* = Q V* Qᵀ`.
pub fn optimal_rank_r(setting: &RegressionSetting, r: usize) -> Result<ReducedLsa, RegressionError> {
    let v = optimal_diagonal(setting, r)?;
    let q = setting.cov().basis();
    let kq = q * Matrix::from_diagonal(&v) * q.transpose();
    ReducedLsa::new(kq, 1.0, r)
}

/// Excess loss of the optimal rank-`r` model,
/// `½ Σ_{i>r} λ_i² / ((1+1/N) λ_i + tr(D)/N)`.
pub fn truncation_gap(setting: &RegressionSetting, r: usize) -> Result<f64, RegressionError> {
    if setting.cov().trace() <= 0.0 {
        return Err(RegressionError::SingularGamma);
    }
    let gamma_eigs = setting.gamma_eigenvalues();
    Ok(0.5
        * setting
            .eigenvalues()
            .iter()
            .zip(gamma_eigs.iter())
            .skip(r)
            .map(|(l, g)| l * l / g)
            .fold(0.0, |acc, v| acc + v))
}
