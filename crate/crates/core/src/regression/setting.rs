use crate::numerics::{Matrix, SpectralCovariance, Vector};

use super::RegressionError;

/// Pretraining distribution: token covariance and pretraining prompt length.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSetting {
    cov: SpectralCovariance,
    n_pretrain: usize,
}

impl RegressionSetting {
    pub fn new(cov: SpectralCovariance, n_pretrain: usize) -> Result<Self, RegressionError> {
        if n_pretrain == 0 {
            return Err(RegressionError::InvalidSetting(
                "pretraining prompt length must be at least 1".into(),
            ));
        }
        Ok(Self { cov, n_pretrain })
    }

    pub fn cov(&self) -> &SpectralCovariance {
        &self.cov
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }

    pub fn n_pretrain(&self) -> usize {
        self.n_pretrain
    }

    pub fn eigenvalues(&self) -> &Vector {
        self.cov.eigenvalues()
    }

    pub fn lambda(&self) -> Matrix {
        self.cov.materialize()
    }

    /// Eigenvalues of `Γ`: `(1 + 1/N) λ_i + tr(Λ)/N`.
    pub fn gamma_eigenvalues(&self) -> Vector {
        let n = self.n_pretrain as f64;
        let tr = self.cov.trace();
        self.eigenvalues().map(|l| (1.0 + 1.0 / n) * l + tr / n)
    }

    fn require_invertible_gamma(&self) -> Result<(), RegressionError> {
        if self.cov.trace() <= 0.0 {
            return Err(RegressionError::SingularGamma);
        }
        Ok(())
    }

    /// `Γ^{-1}`, which is also the unconstrained minimiser of the
    /// simplified loss at `u = 1`.
    pub fn gamma_inverse(&self) -> Result<Matrix, RegressionError> {
        self.require_invertible_gamma()?;
        let n = self.n_pretrain as f64;
        let tr = self.cov.trace();
        Ok(self.cov.spectral_map(|l| 1.0 / ((1.0 + 1.0 / n) * l + tr / n)))
    }
}

/// `Γ = (1 + 1/N) Λ + (1/N) tr(Λ) I`.
pub fn gamma_matrix(setting: &RegressionSetting) -> Matrix {
    let n = setting.n_pretrain() as f64;
    let tr = setting.cov().trace();
    setting
        .cov()
        .spectral_map(|l| (1.0 + 1.0 / n) * l + tr / n)
}
