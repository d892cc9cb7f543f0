//! Two-layer multi-head ReLU attention for parity and its optimal construction.

use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, Vector};

use super::config::{Dictionary, ParityConfig, Task};
use super::data::ParityPrompt;
use super::ParityError;

pub fn relu(z: f64) -> f64 {
    z.max(0.0)
}

/// `ℓ(z) = max(0, 1 − z)`.
pub fn hinge(z: f64) -> f64 {
    (1.0 - z).max(0.0)
}

/// Heads expressed in the dictionary basis: output weights `a` and the
/// diagonals of `V^(h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalParityModel {
    a: Vec<f64>,
    vdiags: Vec<Vector>,
}

impl DiagonalParityModel {
    pub fn new(a: Vec<f64>, vdiags: Vec<Vector>) -> Result<Self, ParityError> {
        if a.len() != vdiags.len() {
            return Err(ParityError::InvalidArgument(format!(
                "{} output weights for {} heads",
                a.len(),
                vdiags.len()
            )));
        }
        if let Some(x) = a.iter().find(|x| !(x.abs() <= 1.0)) {
            return Err(ParityError::InvalidArgument(format!("output weight {x} outside [-1, 1]")));
        }
        if let Some(first) = vdiags.first() {
            let d = first.len();
            if d == 0 || vdiags.iter().any(|v| v.len() != d) {
                return Err(ParityError::InvalidArgument("head diagonals must share a nonzero length".into()));
            }
        }
        Ok(Self { a, vdiags })
    }

    pub fn empty() -> Self {
        Self { a: Vec::new(), vdiags: Vec::new() }
    }

    pub fn heads(&self) -> usize {
        self.a.len()
    }

    /// Feature dimension, or 0 for a model without heads.
    pub fn dim(&self) -> usize {
        self.vdiags.first().map_or(0, |v| v.len())
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn vdiags(&self) -> &[Vector] {
        &self.vdiags
    }

    /// Copy keeping only the listed heads, in the given order.
    pub fn select(&self, heads: &[usize]) -> Self {
        Self {
            a: heads.iter().map(|&h| self.a[h]).collect(),
            vdiags: heads.iter().map(|&h| self.vdiags[h].clone()).collect(),
        }
    }

    /// `Σ_h a_h σ[⟨diag V^(h), v⟩]`.
    pub fn h_eval(&self, v: &Vector) -> Result<f64, ParityError> {
        if self.heads() > 0 && v.len() != self.dim() {
            return Err(ParityError::DimensionMismatch { expected: self.dim(), got: v.len() });
        }
        Ok(self.a.iter().zip(&self.vdiags).map(|(a, vd)| a * relu(vd.dot(v))).sum())
    }

    /// Infinite-prompt output on `task`, where the context statistic is
    /// exactly `2γ` on both support coordinates:
    /// `Σ_h a_h σ[2γ (V_ii φ_qi + V_jj φ_qj)]`.
    pub fn forward_infinite_n(&self, task: Task, phi_qi: f64, phi_qj: f64, gamma: f64) -> f64 {
        self.a
            .iter()
            .zip(&self.vdiags)
            .map(|(a, vd)| a * relu(2.0 * gamma * (vd[task.i] * phi_qi + vd[task.j] * phi_qj)))
            .sum()
    }
}

pub fn forward_infinite_n(diag: &DiagonalParityModel, task: Task, phi_qi: f64, phi_qj: f64, gamma: f64) -> f64 {
    diag.forward_infinite_n(task, phi_qi, phi_qj, gamma)
}

pub fn h_eval(diag: &DiagonalParityModel, v: &Vector) -> Result<f64, ParityError> {
    diag.h_eval(v)
}

/// The `i`-th binary digit of `n`, counting from 1 at the least significant end.
pub fn bin_digit(n: u64, i: u32) -> u8 {
    debug_assert!(i >= 1);
    if i > 64 {
        0
    } else {
        ((n >> (i - 1)) & 1) as u8
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelSize {
    /// `2(ν₁+1)` heads, covering the important tasks only.
    Small,
    /// `2(ν₂+1)` heads, covering every task.
    Large,
}

impl ModelSize {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSize::Small => "small",
            ModelSize::Large => "large",
        }
    }

    pub fn nu(&self, cfg: &ParityConfig) -> u32 {
        match self {
            ModelSize::Small => cfg.nu1(),
            ModelSize::Large => cfg.nu2(),
        }
    }
}

/// 0-based heads of the large model that make up the small one:
/// digit heads `0..ν₁`, the first constant head `ν₂`, their mirrors
/// `ν₂+1..ν₂+ν₁+1` and the second constant head `2ν₂+1`.
pub fn small_head_indices(nu1: u32, nu2: u32) -> Vec<usize> {
    let (n1, n2) = (nu1 as usize, nu2 as usize);
    (0..n1)
        .chain(std::iter::once(n2))
        .chain(n2 + 1..n2 + n1 + 1)
        .chain(std::iter::once(2 * n2 + 1))
        .collect()
}

fn digit_model(nu_heads: u32, nu_const: u32, d: usize, gamma: f64) -> DiagonalParityModel {
    let scale = 1.0 / (4.0 * gamma);
    let mut a = Vec::new();
    let mut vdiags = Vec::new();
    for h in 1..=nu_heads {
        a.push(-1.0);
        vdiags.push(Vector::from_fn(d, |c, _| {
            (2.0 * f64::from(bin_digit(c as u64, h)) - 1.0) * scale
        }));
    }
    a.push(1.0);
    vdiags.push(Vector::from_element(d, -f64::from(nu_const) / (4.0 * gamma)));
    let first_half = vdiags.len();
    for h in 0..first_half {
        a.push(a[h]);
        vdiags.push(-&vdiags[h]);
    }
    DiagonalParityModel { a, vdiags }
}

/// The zero-loss construction with `2(ν+1)` heads. Digit head `h` has
/// `V_cc = (2·digit(c, h) − 1)/(4γ)` for 0-based coordinate `c` and `a = −1`;
/// the constant head has `V = −ν/(4γ)·I` and `a = +1`; the second half
/// negates `V` and keeps `a`. The small model keeps the heads listed by
/// [`small_head_indices`] with constant magnitude `ν₁/(4γ)`.
pub fn build_optimal(cfg: &ParityConfig, which: ModelSize) -> DiagonalParityModel {
    let d = cfg.d();
    match which {
        ModelSize::Large => digit_model(cfg.nu2(), cfg.nu2(), d, cfg.gamma()),
        ModelSize::Small => {
            let large = digit_model(cfg.nu2(), cfg.nu1(), d, cfg.gamma());
            large.select(&small_head_indices(cfg.nu1(), cfg.nu2()))
        }
    }
}

/// Heads as full `d×d` matrices acting on observed inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct ParityModel {
    a: Vec<f64>,
    w: Vec<Matrix>,
}

impl ParityModel {
    pub fn new(a: Vec<f64>, w: Vec<Matrix>) -> Result<Self, ParityError> {
        if a.len() != w.len() {
            return Err(ParityError::InvalidArgument(format!("{} output weights for {} heads", a.len(), w.len())));
        }
        if let Some(first) = w.first() {
            let d = first.nrows();
            if w.iter().any(|m| m.nrows() != d || m.ncols() != d) {
                return Err(ParityError::InvalidArgument("head matrices must be square and equal-sized".into()));
            }
        }
        Ok(Self { a, w })
    }

    pub fn zeros(heads: usize, d: usize) -> Self {
        Self {
            a: vec![1.0; heads],
            w: vec![Matrix::zeros(d, d); heads],
        }
    }

    pub fn heads(&self) -> usize {
        self.a.len()
    }

    pub fn dim(&self) -> usize {
        self.w.first().map_or(0, |m| m.nrows())
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn w(&self) -> &[Matrix] {
        &self.w
    }

    /// `Σ_h a_h σ[cᵀ W^(h) x_q]` for a precomputed context `c = Xᵀy/ρ`.
    pub fn forward_context(&self, context: &Vector, x_query: &Vector) -> Result<f64, ParityError> {
        let d = self.dim();
        if self.heads() > 0 && (context.len() != d || x_query.len() != d) {
            return Err(ParityError::DimensionMismatch {
                expected: d,
                got: if context.len() != d { context.len() } else { x_query.len() },
            });
        }
        Ok(self
            .a
            .iter()
            .zip(&self.w)
            .map(|(a, w)| a * relu((w * x_query).dot(context)))
            .sum())
    }

    /// Largest off-diagonal magnitude of `Gᵀ W^(h) G` over all heads.
    pub fn off_diagonal_in(&self, dict: &Dictionary) -> f64 {
        let g = dict.matrix();
        self.w
            .iter()
            .map(|w| {
                let c = g.transpose() * w * g;
                let mut worst = 0.0f64;
                for r in 0..c.nrows() {
                    for s in 0..c.ncols() {
                        if r != s {
                            worst = worst.max(c[(r, s)].abs());
                        }
                    }
                }
                worst
            })
            .fold(0.0, f64::max)
    }
}

/// `g(X, y, x_q) = Σ_h a_h σ[(yᵀX/ρ) W^(h) x_q]`.
pub fn forward(model: &ParityModel, prompt: &ParityPrompt, rho: f64) -> Result<f64, ParityError> {
    if !(rho > 0.0) {
        return Err(ParityError::InvalidArgument(format!("normaliser must be positive, got {rho}")));
    }
    model.forward_context(&prompt.context(rho), &prompt.x_query)
}

/// `W^(h) = G diag(V^(h)) Gᵀ`.
pub fn embed_model(diag: &DiagonalParityModel, dict: &Dictionary) -> Result<ParityModel, ParityError> {
    let g = dict.matrix();
    if diag.heads() > 0 && diag.dim() != dict.dim() {
        return Err(ParityError::DimensionMismatch { expected: dict.dim(), got: diag.dim() });
    }
    let w = diag
        .vdiags()
        .iter()
        .map(|v| g * Matrix::from_diagonal(v) * g.transpose())
        .collect();
    ParityModel::new(diag.a().to_vec(), w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::make_rng;
    use crate::parity::data::{sample_parity_prompt, PromptMode};

    fn cfg(nu1: u32, nu2: u32, gamma: f64) -> ParityConfig {
        ParityConfig::new(nu1, nu2, gamma, 0.0).unwrap()
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(1.0), 0.0);
        assert_eq!(hinge(0.0), 1.0);
        assert_eq!(hinge(-2.0), 3.0);
    }

    #[test]
    fn digit_examples() {
        assert_eq!(bin_digit(6, 2), 1);
        assert_eq!(bin_digit(8, 4), 1);
        assert_eq!(bin_digit(6, 1), 0);
        assert!((1..=64).all(|i| bin_digit(0, i) == 0));
    }

    #[test]
    fn worked_example_with_eight_coordinates() {
        let gamma = 0.1;
        let s = 1.0 / (4.0 * gamma);
        let m = build_optimal(&cfg(1, 3, gamma), ModelSize::Large);
        assert_eq!(m.heads(), 8);
        let head1: Vec<f64> = [-1., 1., -1., 1., -1., 1., -1., 1.].iter().map(|v| v * s).collect();
        assert_eq!(m.vdiags()[0].as_slice(), head1.as_slice());
        assert!(m.vdiags()[3].iter().all(|v| *v == -3.0 * s));
        for h in 0..4 {
            assert_eq!(m.vdiags()[h + 4], -&m.vdiags()[h]);
            assert_eq!(m.a()[h + 4], m.a()[h]);
        }
        assert_eq!(m.a(), &[-1., -1., -1., 1., -1., -1., -1., 1.]);
    }

    #[test]
    fn smallest_construction() {
        let gamma = 0.2;
        let s = 1.0 / (4.0 * gamma);
        let m = build_optimal(&cfg(1, 1, gamma), ModelSize::Large);
        assert_eq!(m.heads(), 4);
        assert_eq!(m.vdiags()[0].as_slice(), &[-s, s]);
        assert_eq!(m.vdiags()[1].as_slice(), &[-s, -s]);
    }

    #[test]
    fn small_model_is_subset_of_large() {
        let gamma = 0.1;
        let c = cfg(1, 3, gamma);
        assert_eq!(small_head_indices(1, 3), vec![0, 3, 4, 7]);
        let small = build_optimal(&c, ModelSize::Small);
        let large = build_optimal(&c, ModelSize::Large);
        let s = 1.0 / (4.0 * gamma);
        for (pos, &h) in small_head_indices(1, 3).iter().enumerate() {
            assert_eq!(small.a()[pos], large.a()[h]);
            if h == 3 || h == 7 {
                let sign = if h == 3 { -1.0 } else { 1.0 };
                assert!(small.vdiags()[pos].iter().all(|v| *v == sign * s));
            } else {
                assert_eq!(small.vdiags()[pos], large.vdiags()[h]);
            }
        }
    }

    #[test]
    fn construction_entries_are_quantised() {
        for nu2 in 1..=4 {
            for nu1 in 1..=nu2 {
                let gamma = 0.05;
                let c = cfg(nu1, nu2, gamma);
                for which in [ModelSize::Small, ModelSize::Large] {
                    let m = build_optimal(&c, which);
                    let nu = which.nu(&c) as usize;
                    assert_eq!(m.heads(), 2 * (nu + 1));
                    for (h, v) in m.vdiags().iter().enumerate() {
                        assert_eq!(m.a()[h].abs(), 1.0);
                        let constant = h % (nu + 1) == nu;
                        let mag = if constant { nu as f64 } else { 1.0 } / (4.0 * gamma);
                        assert!(v.iter().all(|x| x.abs() == mag));
                    }
                }
            }
        }
    }

    #[test]
    fn infinite_n_examples() {
        let gamma = 0.1;
        let m = build_optimal(&cfg(1, 2, gamma), ModelSize::Large);
        let t = Task::new(0, 1);
        assert!((m.forward_infinite_n(t, -1.0, -1.0, gamma) - 1.0).abs() < 1e-12);
        // heads 1–3 are inactive; the mirrored digit head 4 contributes −1
        assert!((m.forward_infinite_n(t, 1.0, -1.0, gamma) + 1.0).abs() < 1e-12);
        assert_eq!(DiagonalParityModel::empty().forward_infinite_n(t, 1.0, 1.0, gamma), 0.0);
    }

    #[test]
    fn h_eval_matches_infinite_n() {
        let gamma = 0.15;
        let c = cfg(2, 3, gamma);
        let m = build_optimal(&c, ModelSize::Large);
        for i in 0..8 {
            for j in 0..8 {
                if i == j {
                    continue;
                }
                for (a, b) in super::super::config::CELLS {
                    let mut v = Vector::zeros(8);
                    v[i] = 2.0 * gamma * a;
                    v[j] = 2.0 * gamma * b;
                    let h = m.h_eval(&v).unwrap();
                    let f = m.forward_infinite_n(Task::new(i, j), a, b, gamma);
                    assert!((h - f).abs() <= 1e-12);
                    assert_eq!(hinge(a * b * h), 0.0, "task ({i},{j}) cell ({a},{b})");
                }
            }
        }
        assert_eq!(m.h_eval(&Vector::zeros(8)).unwrap(), 0.0);
    }

    #[test]
    fn embedding_round_trip() {
        let c = cfg(1, 3, 0.1);
        let diag = build_optimal(&c, ModelSize::Large);
        let model = embed_model(&diag, &Dictionary::identity(8)).unwrap();
        for (w, v) in model.w().iter().zip(diag.vdiags()) {
            assert_eq!(w, &Matrix::from_diagonal(v));
        }
        let mut rng = make_rng(2);
        let dict = Dictionary::random(&mut rng, 8).unwrap();
        let model = embed_model(&diag, &dict).unwrap();
        assert!(model.off_diagonal_in(&dict) <= 1e-10);
        let g = dict.matrix();
        for (w, v) in model.w().iter().zip(diag.vdiags()) {
            let back = g.transpose() * w * g;
            assert!((back.diagonal() - v).amax() <= 1e-10);
            assert!((w.norm() - v.norm()).abs() <= 1e-10);
        }
    }

    #[test]
    fn forward_examples() {
        let mut rng = make_rng(3);
        let dict = Dictionary::identity(4);
        let p = sample_parity_prompt(&mut rng, 0.1, Task::new(0, 1), &dict, 50, PromptMode::Iid).unwrap();
        assert_eq!(forward(&ParityModel::zeros(3, 4), &p, 50.0).unwrap(), 0.0);
        let single = ParityModel::new(vec![1.0], vec![Matrix::identity(4, 4)]).unwrap();
        let expect = relu((p.phi.transpose() * &p.y / 50.0).dot(&p.phi_query));
        assert!((forward(&single, &p, 50.0).unwrap() - expect).abs() < 1e-12);
        assert!(forward(&single, &p, 0.0).is_err());
    }

    /// The constructed margins are exactly 1, so the finite-prompt deviation
    /// is pure pre-activation noise of size `(ν/4γ)/√M`.
    #[test]
    fn long_prompts_approach_infinite_n() {
        let gamma = 0.2;
        let c = cfg(1, 2, gamma);
        let diag = build_optimal(&c, ModelSize::Large);
        let mut rng = make_rng(9);
        let dict = Dictionary::random(&mut rng, 4).unwrap();
        let model = embed_model(&diag, &dict).unwrap();
        let mut rms = Vec::new();
        for m in [1024usize, 4096] {
            let mut sum_sq = 0.0;
            for _ in 0..400 {
                let i = rng.below(4);
                let j = (i + 1 + rng.below(3)) % 4;
                let task = Task::new(i, j);
                let p = sample_parity_prompt(&mut rng, gamma, task, &dict, m, PromptMode::Iid).unwrap();
                let g = forward(&model, &p, m as f64).unwrap();
                let inf = diag.forward_infinite_n(task, p.phi_query[i], p.phi_query[j], gamma);
                sum_sq += (g - inf).powi(2);
            }
            rms.push((sum_sq / 400.0).sqrt());
        }
        assert!(rms[1] <= 0.1, "{rms:?}");
        let ratio = rms[0] / rms[1];
        assert!((1.6..2.5).contains(&ratio), "{rms:?}");
    }
}
