use super::linalg::{orthonormality_defect, random_orthonormal};
use super::rng::RngStream;
use super::{Matrix, NumericsError, Vector};

const ORTHONORMAL_TOL: f64 = 1e-10;

/// Covariance held in spectral form `Λ = Q diag(λ) Qᵀ` with `λ` sorted
/// non-increasing. Covariances are always built from their spectrum; nothing
/// in this crate diagonalises a dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCovariance {
    eigenvalues: Vector,
    basis: Matrix,
}

impl SpectralCovariance {
    pub fn new(eigenvalues: Vec<f64>, basis: Matrix) -> Result<Self, NumericsError> {
        let d = eigenvalues.len();
        if d == 0 {
            return Err(NumericsError::EmptyDimension("SpectralCovariance"));
        }
        if d > MAX_DIM {
            return Err(NumericsError::InvalidSpectrum(format!(
                "dimension {d} exceeds the supported maximum {MAX_DIM}"
            )));
        }
        if basis.nrows() != d || basis.ncols() != d {
            return Err(NumericsError::DimensionMismatch {
                what: "SpectralCovariance basis",
                expected: d,
                got: basis.nrows().max(basis.ncols()),
            });
        }
        if let Some(&bad) = eigenvalues.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(NumericsError::InvalidSpectrum(format!(
                "eigenvalue {bad} is negative or not finite"
            )));
        }
        if eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(NumericsError::InvalidSpectrum(
                "eigenvalues must be sorted non-increasing".into(),
            ));
        }
        let defect = orthonormality_defect(&basis);
        if defect > ORTHONORMAL_TOL {
            return Err(NumericsError::NotOrthonormal(defect));
        }
        Ok(Self {
            eigenvalues: Vector::from_vec(eigenvalues),
            basis,
        })
    }

    /// Covariance aligned with the coordinate axes (`Q = I`).
    pub fn diagonal(eigenvalues: Vec<f64>) -> Result<Self, NumericsError> {
        let d = eigenvalues.len();
        Self::new(eigenvalues, Matrix::identity(d, d))
    }

    /// Covariance with the given spectrum and a random eigenbasis.
    pub fn with_random_basis(
        rng: &mut RngStream,
        eigenvalues: Vec<f64>,
    ) -> Result<Self, NumericsError> {
        let q = random_orthonormal(rng, eigenvalues.len().max(1))?;
        Self::new(eigenvalues, q)
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &Vector {
        &self.eigenvalues
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.sum()
    }

    /// `Q f(D) Qᵀ` for a spectral function `f`.
    pub fn spectral_map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let diag = self.eigenvalues.map(f);
        &self.basis * Matrix::from_diagonal(&diag) * self.basis.transpose()
    }

    pub fn materialize(&self) -> Matrix {
        self.spectral_map(|l| l)
    }

    /// `Q diag(λ)^{1/2}`, the factor used to draw `x ~ N(0, Λ)`.
    pub fn sqrt_factor(&self) -> Matrix {
        let mut f = self.basis.clone();
        for (j, l) in self.eigenvalues.iter().enumerate() {
            f.column_mut(j).scale_mut(l.sqrt());
        }
        f
    }

    /// One draw from `N(0, Λ)` written into `out`.
    pub fn sample_into(&self, factor: &Matrix, rng: &mut RngStream, out: &mut [f64]) {
        let d = self.dim();
        let mut buf = [0.0f64; MAX_DIM];
        let z = &mut buf[..d];
        for zi in z.iter_mut() {
            *zi = rng.gauss();
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, zj) in z.iter().enumerate() {
                acc += factor[(i, j)] * zj;
            }
            *o = acc;
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Vector {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&self.sqrt_factor(), rng, &mut out);
        Vector::from_vec(out)
    }
}

/// Upper bound on dimension for the stack-buffered samplers.
pub const MAX_DIM: usize = 64;
