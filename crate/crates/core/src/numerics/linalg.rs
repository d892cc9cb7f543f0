//! Small dense helpers on top of `nalgebra` with explicit dimension checks.

use super::rng::RngStream;
use super::{Matrix, NumericsError, Vector};

/// Relative drop tolerance for Gram–Schmidt, scaled by the largest column norm.
pub const GRAM_SCHMIDT_DROP_TOL: f64 = 1e-9;

const SYMMETRY_TOL: f64 = 1e-10;

pub fn check_square(m: &Matrix, what: &'static str) -> Result<(), NumericsError> {
    if m.nrows() != m.ncols() {
        return Err(NumericsError::NotSquare {
            what,
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

pub fn check_len(expected: usize, got: usize, what: &'static str) -> Result<(), NumericsError> {
    if expected != got {
        return Err(NumericsError::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Largest entrywise deviation from symmetry.
pub fn asymmetry(m: &Matrix) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// `xᵀ A x` for symmetric `A`.
pub fn induced_norm_sq(x: &Vector, a: &Matrix) -> Result<f64, NumericsError> {
    check_square(a, "induced_norm_sq matrix")?;
    check_len(a.nrows(), x.len(), "induced_norm_sq vector")?;
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(NumericsError::NotSymmetric(asym));
    }
    Ok(x.dot(&(a * x)))
}

/// Orthonormal basis of the column space of `z` by modified Gram–Schmidt.
///
/// Columns whose residual norm falls below `GRAM_SCHMIDT_DROP_TOL` times the
/// largest input column norm are dropped, so exact duplicates and negated
/// copies contribute nothing.
pub fn orthonormal_basis(z: &Matrix) -> Vec<Vector> {
    orthonormal_basis_with_tol(z, GRAM_SCHMIDT_DROP_TOL)
}

/// Gram–Schmidt basis with a caller-chosen relative drop tolerance.
pub fn orthonormal_basis_with_tol(z: &Matrix, rel_tol: f64) -> Vec<Vector> {
    let max_norm = z
        .column_iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if max_norm == 0.0 {
        return Vec::new();
    }
    let drop = rel_tol * max_norm;
    let mut basis: Vec<Vector> = Vec::new();
    for col in z.column_iter() {
        let mut v: Vector = col.into_owned();
        // Two passes keep the basis orthogonal to machine precision.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let n = v.norm();
        if n > drop {
            basis.push(v / n);
        }
    }
    basis
}

pub fn numerical_rank(z: &Matrix) -> usize {
    orthonormal_basis(z).len()
}

pub fn numerical_rank_with_tol(z: &Matrix, rel_tol: f64) -> usize {
    orthonormal_basis_with_tol(z, rel_tol).len()
}

/// Orthogonal projection of `v` onto the column space of `z`.
pub fn project_columnspace(z: &Matrix, v: &Vector) -> Result<Vector, NumericsError> {
    if z.nrows() == 0 {
        return Err(NumericsError::EmptyDimension("project_columnspace"));
    }
    check_len(z.nrows(), v.len(), "project_columnspace vector")?;
    Ok(project_onto_basis(&orthonormal_basis(z), v))
}

/// Projection onto an orthonormal basis computed once by [`orthonormal_basis`].
pub fn project_onto_basis(basis: &[Vector], v: &Vector) -> Vector {
    let mut out = Vector::zeros(v.len());
    for q in basis {
        out.axpy(q.dot(v), q, 1.0);
    }
    out
}

/// Haar-distributed orthonormal matrix: Gram–Schmidt QR of a Gaussian matrix,
/// whose triangular factor has a positive diagonal by construction.
pub fn random_orthonormal(rng: &mut RngStream, d: usize) -> Result<Matrix, NumericsError> {
    if d == 0 {
        return Err(NumericsError::EmptyDimension("random_orthonormal"));
    }
    loop {
        let g = Matrix::from_fn(d, d, |_, _| rng.gauss());
        let basis = orthonormal_basis(&g);
        // A singular Gaussian draw has probability zero; redraw if it happens.
        if basis.len() == d {
            return Ok(Matrix::from_columns(&basis));
        }
    }
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_defect(q: &Matrix) -> f64 {
    let n = q.ncols();
    (q.transpose() * q - Matrix::identity(n, n)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;

    #[test]
    fn induced_norm_examples() {
        let x = Vector::from_vec(vec![3.0, 4.0]);
        assert_eq!(induced_norm_sq(&x, &Matrix::identity(2, 2)).unwrap(), 25.0);
        let a = Matrix::from_diagonal(&Vector::from_vec(vec![2.0, 1.0]));
        let ones = Vector::from_vec(vec![1.0, 1.0]);
        assert_eq!(induced_norm_sq(&ones, &a).unwrap(), 3.0);
        assert_eq!(induced_norm_sq(&Vector::zeros(2), &a).unwrap(), 0.0);
    }

    #[test]
    fn induced_norm_errors() {
        let x = Vector::from_vec(vec![1.0, 1.0]);
        let asym = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(
            induced_norm_sq(&x, &asym),
            Err(NumericsError::NotSymmetric(_))
        ));
        assert!(matches!(
            induced_norm_sq(&x, &Matrix::identity(3, 3)),
            Err(NumericsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn axis_projection() {
        let z = Matrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let p = project_columnspace(&z, &Vector::from_vec(vec![3.0, 4.0])).unwrap();
        assert_eq!(p, Vector::from_vec(vec![3.0, 0.0]));
    }

    #[test]
    fn full_rank_projection_is_identity() {
        let mut rng = make_rng(4);
        let z = Matrix::from_fn(5, 5, |_, _| rng.gauss());
        let v = Vector::from_fn(5, |_, _| rng.gauss());
        let p = project_columnspace(&z, &v).unwrap();
        assert!((p - v).norm() < 1e-10);
    }

    #[test]
    fn negated_duplicate_columns_match_single_column() {
        let mut rng = make_rng(8);
        let c = Vector::from_fn(6, |_, _| rng.gauss());
        let v = Vector::from_fn(6, |_, _| rng.gauss());
        let single = Matrix::from_columns(std::slice::from_ref(&c));
        let doubled = Matrix::from_columns(&[c.clone(), -c.clone()]);
        let a = project_columnspace(&single, &v).unwrap();
        let b = project_columnspace(&doubled, &v).unwrap();
        assert!((a - b).norm() < 1e-12);
        assert_eq!(numerical_rank(&doubled), 1);
    }

    #[test]
    fn empty_rows_rejected() {
        let z = Matrix::zeros(0, 2);
        assert!(project_columnspace(&z, &Vector::zeros(0)).is_err());
    }

    #[test]
    fn orthonormal_examples() {
        let mut rng = make_rng(0);
        let q1 = random_orthonormal(&mut rng, 1).unwrap();
        assert_eq!(q1[(0, 0)].abs(), 1.0);
        let q8 = random_orthonormal(&mut rng, 8).unwrap();
        assert!(orthonormality_defect(&q8) <= 1e-10);
        let q4 = random_orthonormal(&mut make_rng(21), 4).unwrap();
        let det = q4.determinant();
        assert!((det.abs() - 1.0).abs() < 1e-8, "det {det}");
        assert!(random_orthonormal(&mut rng, 0).is_err());
    }
}
