//! Seeded randomness, small dense linear algebra and spectral covariances
//! shared by the regression and parity settings.

pub mod linalg;
pub mod montecarlo;
pub mod rng;
pub mod spectral;

use thiserror::Error;

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

pub use linalg::{
    induced_norm_sq, numerical_rank, orthonormal_basis, project_columnspace, random_orthonormal,
};
pub use montecarlo::{MeanEstimate, Moments};
pub use rng::{gauss_vector, make_rng, rademacher_vector, RngStream};
pub use spectral::SpectralCovariance;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("{0}: dimension must be at least 1")]
    EmptyDimension(&'static str),
    #[error("{what}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{what}: matrix is {rows}x{cols}, expected square")]
    NotSquare {
        what: &'static str,
        rows: usize,
        cols: usize,
    },
    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),
    #[error("basis is not orthonormal (defect {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),
}
