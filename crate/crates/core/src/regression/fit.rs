//! Gradient descent on the factorised simplified loss, used as an
//! independent optimality check for the closed-form rank-`r` optimum.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numerics::{Matrix, RngStream};

use super::model::{FactorizedLsa, ReducedLsa};
use super::setting::{gamma_matrix, RegressionSetting};
use super::RegressionError;

const DIVERGENCE_LOSS: f64 = 1e10;

/// Simplified loss with its constant matrices precomputed.
#[derive(Clone, Debug)]
pub struct TraceLoss {
    gamma_lambda: Matrix,
    lambda: Matrix,
    lambda_sq: Matrix,
}

/// Gradient of the loss with respect to `(A, B, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorGradient {
    pub a: Matrix,
    pub b: Matrix,
    pub u: f64,
}

impl FactorGradient {
    pub fn norm(&self) -> f64 {
        (self.a.norm_squared() + self.b.norm_squared() + self.u * self.u).sqrt()
    }
}

impl TraceLoss {
    pub fn new(setting: &RegressionSetting) -> Self {
        let lambda = setting.lambda();
        let gamma_lambda = gamma_matrix(setting) * &lambda;
        let lambda_sq = &lambda * &lambda;
        Self {
            gamma_lambda,
            lambda,
            lambda_sq,
        }
    }

    pub fn value(&self, kq: &Matrix, pv: f64) -> f64 {
        let quad = (&self.gamma_lambda * kq * &self.lambda).dot(kq);
        let lin = self.lambda_sq.dot(kq);
        0.5 * pv * pv * quad - pv * lin
    }

    /// Loss and analytic gradient at a factorised point. With `P = ΓΛ`,
    /// `∂ℓ/∂U = u² P U Λ − u Λ²`, `∂ℓ/∂A = (∂ℓ/∂U) B`, `∂ℓ/∂B = (∂ℓ/∂U)ᵀ A`
    /// and `∂ℓ/∂u = u tr(P U Λ Uᵀ) − tr(Λ² Uᵀ)`.
    pub fn value_and_gradient(&self, point: &FactorizedLsa) -> (f64, FactorGradient) {
        let kq = point.kq();
        let u = point.u;
        let pul = &self.gamma_lambda * &kq * &self.lambda;
        let quad = pul.dot(&kq);
        let lin = self.lambda_sq.dot(&kq);
        let grad_kq = &pul * (u * u) - &self.lambda_sq * u;
        let grad = FactorGradient {
            a: &grad_kq * &point.b,
            b: grad_kq.transpose() * &point.a,
            u: u * quad - lin,
        };
        (0.5 * u * u * quad - u * lin, grad)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdHyper {
    pub lr: f64,
    pub steps: usize,
    pub restarts: usize,
    pub tol: f64,
}

impl GdHyper {
    /// Step size `0.05/λ₁²`, `5·10⁴` steps, 20 restarts, gradient tolerance `1e-10`.
    pub fn default_for(setting: &RegressionSetting) -> Self {
        let l1 = setting.eigenvalues()[0].max(f64::MIN_POSITIVE);
        Self {
            lr: 0.05 / (l1 * l1),
            steps: 50_000,
            restarts: 20,
            tol: 1e-10,
        }
    }

    fn validate(&self) -> Result<(), RegressionError> {
        if !(self.lr > 0.0) || self.steps == 0 || self.restarts == 0 || !(self.tol > 0.0) {
            return Err(RegressionError::InvalidSetting(format!(
                "gradient descent hyperparameters must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: ReducedLsa,
    pub loss: f64,
    pub best_restart: usize,
    pub steps_taken: usize,
}

fn descend(
    objective: &TraceLoss,
    mut point: FactorizedLsa,
    hyper: &GdHyper,
) -> Result<(FactorizedLsa, f64, usize), RegressionError> {
    for step in 0..hyper.steps {
        let (value, grad) = objective.value_and_gradient(&point);
        if !value.is_finite() || value.abs() > DIVERGENCE_LOSS {
            return Err(RegressionError::Divergence { loss: value, step });
        }
        if grad.norm() < hyper.tol {
            return Ok((point, value, step));
        }
        point.a -= grad.a * hyper.lr;
        point.b -= grad.b * hyper.lr;
    }
    let final_loss = objective.value(&point.kq(), point.u);
    if !final_loss.is_finite() || final_loss.abs() > DIVERGENCE_LOSS {
        return Err(RegressionError::Divergence {
            loss: final_loss,
            step: hyper.steps,
        });
    }
    Ok((point, final_loss, hyper.steps))
}

/// Best of `restarts` gradient-descent runs on `ℓ̃(A Bᵀ, 1)`.
pub fn fit_rank_r(
    rng: &RngStream,
    setting: &RegressionSetting,
    r: usize,
    hyper: &GdHyper,
) -> Result<FitResult, RegressionError> {
    let d = setting.dim();
    if r > d {
        return Err(RegressionError::InvalidRank { rank: r, dim: d });
    }
    if r == 0 {
        return Ok(FitResult {
            model: ReducedLsa::new(Matrix::zeros(d, d), 1.0, 0)?,
            loss: 0.0,
            best_restart: 0,
            steps_taken: 0,
        });
    }
    hyper.validate()?;
    let objective = TraceLoss::new(setting);
    let scale = 0.3 / setting.eigenvalues()[0].max(f64::MIN_POSITIVE).sqrt();
    let runs: Vec<Result<(FactorizedLsa, f64, usize), RegressionError>> = (0..hyper.restarts)
        .into_par_iter()
        .map(|k| {
            let mut stream = rng.split_index(k as u64);
            let init = FactorizedLsa::random(&mut stream, d, r, scale);
            descend(&objective, init, hyper)
        })
        .collect();
    let mut best: Option<(usize, FactorizedLsa, f64, usize)> = None;
    for (k, run) in runs.into_iter().enumerate() {
        let (point, loss, steps) = run?;
        if best.as_ref().is_none_or(|b| loss < b.2) {
            best = Some((k, point, loss, steps));
        }
    }
    let (best_restart, point, loss, steps_taken) = best.expect("at least one restart");
    Ok(FitResult {
        model: point.to_reduced()?,
        loss,
        best_restart,
        steps_taken,
    })
}

fn perturbed(point: &FactorizedLsa, coord: usize, delta: f64) -> FactorizedLsa {
    let mut p = point.clone();
    let na = p.a.len();
    let nb = p.b.len();
    if coord < na {
        p.a.as_mut_slice()[coord] += delta;
    } else if coord < na + nb {
        p.b.as_mut_slice()[coord - na] += delta;
    } else {
        p.u += delta;
    }
    p
}

/// Worst coordinate-wise relative disagreement between the analytic
/// gradient and central differences with step `h`:
/// `max |g − g_fd| / (|g| + 1e-8)` over all entries of `A`, `B` and `u`.
pub fn gradient_fd_check(setting: &RegressionSetting, point: &FactorizedLsa, h: f64) -> Result<f64, RegressionError> {
    if !(h > 0.0) {
        return Err(RegressionError::InvalidSetting(format!("step must be positive, got {h}")));
    }
    let objective = TraceLoss::new(setting);
    let (_, grad) = objective.value_and_gradient(point);
    let analytic: Vec<f64> = grad
        .a
        .iter()
        .chain(grad.b.iter())
        .copied()
        .chain(std::iter::once(grad.u))
        .collect();
    let mut worst = 0.0f64;
    for (k, g) in analytic.iter().enumerate() {
        let plus = perturbed(point, k, h);
        let minus = perturbed(point, k, -h);
        let fd = (objective.value(&plus.kq(), plus.u) - objective.value(&minus.kq(), minus.u)) / (2.0 * h);
        worst = worst.max((g - fd).abs() / (g.abs() + 1e-8));
    }
    Ok(worst)
}

/// Absolute error of the central difference along `direction` against the
/// analytic directional derivative. The loss restricted to a single
/// coordinate is quadratic, so only joint directions expose the `O(h²)`
/// truncation error of the scheme.
pub fn directional_fd_error(
    setting: &RegressionSetting,
    point: &FactorizedLsa,
    direction: &FactorizedLsa,
    h: f64,
) -> f64 {
    let objective = TraceLoss::new(setting);
    let (_, grad) = objective.value_and_gradient(point);
    let analytic = grad.a.dot(&direction.a) + grad.b.dot(&direction.b) + grad.u * direction.u;
    let step = |t: f64| FactorizedLsa {
        a: &point.a + &direction.a * t,
        b: &point.b + &direction.b * t,
        u: point.u + direction.u * t,
    };
    let plus = step(h);
    let minus = step(-h);
    let fd = (objective.value(&plus.kq(), plus.u) - objective.value(&minus.kq(), minus.u)) / (2.0 * h);
    (analytic - fd).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{make_rng, SpectralCovariance};
    use crate::regression::loss::simplified_loss;

    fn random_setting(seed: u64) -> RegressionSetting {
        let mut rng = make_rng(seed);
        RegressionSetting::new(
            SpectralCovariance::with_random_basis(&mut rng, vec![3.0, 1.5, 1.0, 0.25]).unwrap(),
            6,
        )
        .unwrap()
    }

    #[test]
    fn trace_loss_matches_direct_formula() {
        let s = random_setting(1);
        let mut rng = make_rng(2);
        let u = Matrix::from_fn(4, 4, |_, _| rng.gauss());
        let t = TraceLoss::new(&s);
        let a = t.value(&u, 0.7);
        let b = simplified_loss(&u, 0.7, &s);
        assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let s = random_setting(3);
        let point = FactorizedLsa {
            u: 0.8,
            ..FactorizedLsa::random(&mut make_rng(4), 4, 2, 0.5)
        };
        let err = gradient_fd_check(&s, &point, 1e-5).unwrap();
        assert!(err <= 1e-5, "{err}");
    }

    #[test]
    fn gradient_at_zero_point() {
        let s = random_setting(5);
        let point = FactorizedLsa {
            a: Matrix::zeros(4, 2),
            b: Matrix::zeros(4, 2),
            u: 1.0,
        };
        let (_, g) = TraceLoss::new(&s).value_and_gradient(&point);
        assert_eq!(g.norm(), 0.0);
        assert!(gradient_fd_check(&s, &point, 1e-5).unwrap() <= 1e-6);
    }

    #[test]
    fn central_difference_is_second_order() {
        let s = random_setting(6);
        let mut rng = make_rng(7);
        let point = FactorizedLsa {
            u: 1.3,
            ..FactorizedLsa::random(&mut rng, 4, 2, 0.6)
        };
        let dir = FactorizedLsa {
            u: 0.9,
            ..FactorizedLsa::random(&mut rng, 4, 2, 1.0)
        };
        let coarse = directional_fd_error(&s, &point, &dir, 1e-2);
        let fine = directional_fd_error(&s, &point, &dir, 1e-3);
        let ratio = coarse / fine;
        assert!((50.0..200.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn descent_reaches_closed_form_optimum() {
        use crate::regression::loss::optimal_rank_r;
        let s = random_setting(10);
        let s = RegressionSetting::new(s.cov().clone(), 8).unwrap();
        let hyper = GdHyper::default_for(&s);
        for r in 1..=4 {
            let fit = fit_rank_r(&make_rng(11).split("fit"), &s, r, &hyper).unwrap();
            let opt = optimal_rank_r(&s, r).unwrap();
            let target = simplified_loss(opt.kq(), 1.0, &s);
            let rel = (fit.loss - target).abs() / target.abs();
            assert!(rel <= 1e-6, "r={r} rel={rel} steps={}", fit.steps_taken);
            if r == 2 {
                let diff = (fit.model.effective() - opt.effective()).norm();
                assert!(diff <= 1e-3, "{diff}");
            }
        }
    }

    #[test]
    fn rank_zero_fit_is_zero_model() {
        let s = random_setting(8);
        let hyper = GdHyper::default_for(&s);
        let fit = fit_rank_r(&make_rng(0), &s, 0, &hyper).unwrap();
        assert_eq!(fit.loss, 0.0);
        assert!(fit.model.kq().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oversized_step_reports_divergence() {
        let s = random_setting(9);
        let hyper = GdHyper {
            lr: 50.0,
            steps: 1000,
            restarts: 2,
            tol: 1e-10,
        };
        assert!(matches!(
            fit_rank_r(&make_rng(0), &s, 2, &hyper),
            Err(RegressionError::Divergence { .. })
        ));
    }
}
