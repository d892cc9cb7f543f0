//! Configuration, task sets and the dictionary for the sparse-parity setting.
//!
//! Coordinates and tasks are 0-based throughout: a task `(i, j)` labels an
//! example by `φ_i · φ_j` with `i ≠ j < d`.

use serde::{Deserialize, Serialize};

use crate::numerics::linalg::orthonormality_defect;
use crate::numerics::{random_orthonormal, Matrix, RngStream};

use super::ParityError;

/// Largest supported `ν₂` (so `d ≤ 64`).
pub const MAX_NU: u32 = 6;

const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Task {
    pub i: usize,
    pub j: usize,
}

impl Task {
    pub fn new(i: usize, j: usize) -> Self {
        Self { i, j }
    }
}

/// Validated `(ν₁, ν₂, γ, p_T)` with `k = 2^ν₁` important and `d = 2^ν₂`
/// total coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityConfig {
    nu1: u32,
    nu2: u32,
    gamma: f64,
    p_t: f64,
}

impl ParityConfig {
    pub fn new(nu1: u32, nu2: u32, gamma: f64, p_t: f64) -> Result<Self, ParityError> {
        let invalid = |field: &'static str, reason: String| ParityError::InvalidConfig { field, reason };
        if nu1 == 0 {
            return Err(invalid("nu1", "must be at least 1 (k = 2^nu1 ≥ 2)".into()));
        }
        if nu2 > MAX_NU {
            return Err(invalid("nu2", format!("must be at most {MAX_NU}, got {nu2}")));
        }
        if nu1 > nu2 {
            return Err(invalid("nu1", format!("must not exceed nu2 = {nu2}, got {nu1}")));
        }
        if !(gamma > 0.0 && gamma < 0.25) {
            return Err(invalid("gamma", format!("must lie in (0, 1/4), got {gamma}")));
        }
        let threshold = pt_threshold(gamma, 1usize << nu2)?;
        if !(p_t >= 0.0 && p_t < threshold) {
            return Err(invalid("p_t", format!("must lie in [0, {threshold}), got {p_t}")));
        }
        if nu1 == nu2 && p_t > 0.0 {
            return Err(invalid("p_t", "must be 0 when nu1 == nu2 (no less-important tasks)".into()));
        }
        Ok(Self { nu1, nu2, gamma, p_t })
    }

    pub fn nu1(&self) -> u32 {
        self.nu1
    }

    pub fn nu2(&self) -> u32 {
        self.nu2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p_t(&self) -> f64 {
        self.p_t
    }

    pub fn k(&self) -> usize {
        1 << self.nu1
    }

    pub fn d(&self) -> usize {
        1 << self.nu2
    }

    pub fn threshold(&self) -> f64 {
        pt_threshold(self.gamma, self.d()).expect("gamma validated at construction")
    }

    pub fn with_p_t(&self, p_t: f64) -> Result<Self, ParityError> {
        Self::new(self.nu1, self.nu2, self.gamma, p_t)
    }
}

/// Probabilities of `(φ_i, φ_j)` in the order `(+,+), (+,−), (−,+), (−,−)`.
pub fn cell_probabilities(gamma: f64) -> [f64; 4] {
    [0.25 + gamma, 0.25, 0.25, 0.25 - gamma]
}

/// Sign pairs matching [`cell_probabilities`].
pub const CELLS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];

/// `S₁`: ordered pairs of distinct coordinates below `k`; `S₂`: every other
/// ordered off-diagonal pair below `d`.
pub fn task_sets(k: usize, d: usize) -> Result<(Vec<Task>, Vec<Task>), ParityError> {
    if k < 2 || k > d {
        return Err(ParityError::InvalidArgument(format!("task sets need 2 ≤ k ≤ d, got k={k}, d={d}")));
    }
    let mut s1 = Vec::with_capacity(k * (k - 1));
    let mut s2 = Vec::with_capacity(d * (d - 1) - k * (k - 1));
    for i in 0..d {
        for j in 0..d {
            if i == j {
                continue;
            }
            if i < k && j < k {
                s1.push(Task::new(i, j));
            } else {
                s2.push(Task::new(i, j));
            }
        }
    }
    Ok((s1, s2))
}

/// Upper bound on `p_T` under which the small model ignores `S₂`:
/// `(1/4 − γ) / (d(d−1)/2 · (1/4 + γ) + 1/4 − γ)`.
pub fn pt_threshold(gamma: f64, d: usize) -> Result<f64, ParityError> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(ParityError::InvalidConfig {
            field: "gamma",
            reason: format!("must lie in (0, 1/4), got {gamma}"),
        });
    }
    let pairs = (d * d.saturating_sub(1)) as f64 / 2.0;
    Ok((0.25 - gamma) / (pairs * (0.25 + gamma) + 0.25 - gamma))
}

/// Orthonormal `G` mapping hidden features to inputs, `x = G φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    g: Matrix,
}

impl Dictionary {
    pub fn new(g: Matrix) -> Result<Self, ParityError> {
        if g.nrows() != g.ncols() || g.nrows() == 0 {
            return Err(ParityError::InvalidArgument(format!(
                "dictionary must be square and nonempty, got {}x{}",
                g.nrows(),
                g.ncols()
            )));
        }
        let defect = orthonormality_defect(&g);
        if defect > ORTHONORMAL_TOL {
            return Err(crate::numerics::NumericsError::NotOrthonormal(defect).into());
        }
        Ok(Self { g })
    }

    pub fn identity(d: usize) -> Self {
        Self { g: Matrix::identity(d, d) }
    }

    pub fn random(rng: &mut RngStream, d: usize) -> Result<Self, ParityError> {
        Ok(Self { g: random_orthonormal(rng, d)? })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_set_examples() {
        let (s1, s2) = task_sets(2, 4).unwrap();
        assert_eq!((s1.len(), s2.len()), (2, 10));
        let (_, s2) = task_sets(8, 8).unwrap();
        assert!(s2.is_empty());
        let (s1, _) = task_sets(2, 2).unwrap();
        assert_eq!(s1, vec![Task::new(0, 1), Task::new(1, 0)]);
        assert!(task_sets(1, 4).is_err());
    }

    #[test]
    fn threshold_examples() {
        let t = pt_threshold(0.1, 8).unwrap();
        assert!((t - 0.15 / (28.0 * 0.35 + 0.15)).abs() < 1e-15);
        assert!((t - 0.015_075_4).abs() < 1e-7);
        assert!((pt_threshold(0.1, 2).unwrap() - 0.3).abs() < 1e-15);
        assert!(pt_threshold(0.25 - 1e-12, 8).unwrap() < 1e-10);
        assert!(pt_threshold(0.25, 8).is_err());
        assert!(pt_threshold(0.0, 8).is_err());
    }

    #[test]
    fn config_validation_names_fields() {
        let err = ParityConfig::new(1, 2, 0.3, 0.0).unwrap_err();
        assert!(matches!(err, ParityError::InvalidConfig { field: "gamma", .. }));
        let err = ParityConfig::new(1, 2, 0.1, 0.5).unwrap_err();
        assert!(matches!(err, ParityError::InvalidConfig { field: "p_t", .. }));
        let err = ParityConfig::new(3, 2, 0.1, 0.0).unwrap_err();
        assert!(matches!(err, ParityError::InvalidConfig { field: "nu1", .. }));
        let cfg = ParityConfig::new(1, 3, 0.1, 0.01).unwrap();
        assert_eq!((cfg.k(), cfg.d()), (2, 8));
    }

    #[test]
    fn cell_probabilities_form_a_distribution() {
        for g in [0.01, 0.1, 0.2, 0.249] {
            let p = cell_probabilities(g);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
            assert!(p.iter().all(|x| *x > 0.0 && *x < 1.0));
            // P(y = +1) = P(+,+) + P(−,−)
            assert!((p[0] + p[3] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn dictionary_rejects_non_orthonormal() {
        assert!(Dictionary::new(Matrix::identity(3, 3) * 2.0).is_err());
        let mut rng = crate::numerics::make_rng(1);
        let d = Dictionary::random(&mut rng, 8).unwrap();
        assert!(orthonormality_defect(d.matrix()) <= 1e-10);
    }
}
