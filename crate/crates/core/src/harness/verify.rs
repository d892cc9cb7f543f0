//! Verification suites: every closed form against its independent oracle,
//! reported as deterministic text.

use std::fmt::Write as _;

use crate::numerics::{make_rng, Matrix, RngStream, SpectralCovariance, Vector};
use crate::parity::coverage::all_tasks;
use crate::parity::{
    bruteforce_min_heads, build_optimal, decomposition_residual, exact_loss_breakdown,
    exact_population_loss, loglog_slope, projection_energy_ratio, uncovered_patterns, ModelSize,
    ParityConfig, ResidualMode,
};
use crate::regression::{
    behavior_gap_closed, empirical_pretrain_risk, eval_loss_closed, eval_loss_mc, fit_rank_r,
    label_moment_closed, label_moment_mc, loss_gap_norm, min_simplified_loss, optimal_rank_r,
    simplified_loss, truncation_gap, FactorizedLsa, GdHyper, ReducedLsa, RegressionSetting,
    WeightDecomposition,
};

use super::config::{ParityParams, RegressionParams};
use super::sweep::{parity_dictionary, regression_setting};
use super::HarnessError;

const GD_REL_TOL: f64 = 1e-6;
const GD_FROBENIUS_TOL: f64 = 1e-3;
const MC_SIGMAS: f64 = 3.0;
const GAP_TOL: f64 = 1e-12;
const SLOPE_TOL: f64 = 1e-10;
const MOMENT_DIM: usize = 3;
const MOMENT_SAMPLES: usize = 1_000_000;
const MOMENT_SIGMA: f64 = 0.5;
const GAP_IDENTITY_POINTS: usize = 50;
const RATIO_REL_TOL: f64 = 0.05;
const ENERGY_REL_TOL: f64 = 0.02;
const RESIDUAL_SLOPE: f64 = -0.5;
const RESIDUAL_SLOPE_TOL: f64 = 0.1;
const CONSTRUCTION_GAMMAS: [f64; 3] = [0.05, 0.1, 0.2];
const CONSTRUCTION_NU2: [u32; 3] = [1, 2, 3];
const SMALL_REGIME_PAIRS: [(u32, u32); 3] = [(1, 2), (1, 3), (2, 3)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SuiteFilter {
    Regression,
    Parity,
    All,
}

impl SuiteFilter {
    fn label(self) -> &'static str {
        match self {
            SuiteFilter::Regression => "regression",
            SuiteFilter::Parity => "parity",
            SuiteFilter::All => "all",
        }
    }

    fn includes(self, family: Family) -> bool {
        matches!(
            (self, family),
            (SuiteFilter::All, _) | (SuiteFilter::Regression, Family::Regression) | (SuiteFilter::Parity, Family::Parity)
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Regression,
    Parity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub suite: SuiteFilter,
    /// Added to every entry of the closed-form rank-`r` optimum before it is
    /// compared with gradient descent.
    pub perturb: Option<f64>,
    pub regression: RegressionParams,
    pub parity: ParityParams,
}

impl VerifyOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            suite: SuiteFilter::All,
            perturb: None,
            regression: RegressionParams::default(),
            parity: ParityParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub text: String,
    pub checks: Vec<CheckOutcome>,
    pub suites_run: usize,
    pub suites_failed: usize,
    pub suites_skipped: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites_failed == 0
    }
}

struct Checks {
    suite: &'static str,
    items: Vec<CheckOutcome>,
}

impl Checks {
    fn new(suite: &'static str) -> Self {
        Self { suite, items: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.items.push(CheckOutcome {
            suite: self.suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }
}

type SuiteFn = fn(&VerifyOptions, &RngStream, &mut Checks) -> Result<(), HarnessError>;

const SUITES: [(&str, Family, SuiteFn); 7] = [
    ("optimal low-rank solution", Family::Regression, optimal_low_rank),
    ("pretraining loss shift", Family::Regression, pretraining_shift),
    ("evaluation loss", Family::Regression, evaluation_loss),
    ("label fourth moment", Family::Regression, label_moment),
    ("behavior gap", Family::Regression, behavior_gap),
    ("optimal parity construction", Family::Parity, parity_construction),
    ("signal and noise decomposition", Family::Parity, signal_noise),
];

/// Names of all suites in report order.
pub fn suite_names() -> Vec<&'static str> {
    SUITES.iter().map(|s| s.0).collect()
}

pub fn run_verify(opts: &VerifyOptions) -> Result<VerifyReport, HarnessError> {
    opts.regression.validate()?;
    opts.parity.validate()?;
    if let Some(eps) = opts.perturb {
        if !eps.is_finite() {
            return Err(HarnessError::config("perturb", "must be finite"));
        }
    }
    let root = make_rng(opts.seed).split("verify");
    let mut text = String::new();
    let _ = writeln!(text, "icl-lab verify: seed {}, suites {}", opts.seed, opts.suite.label());
    if let Some(eps) = opts.perturb {
        let _ = writeln!(text, "perturbation {eps:e} added to every entry of the closed-form optimum");
    }
    let mut report = VerifyReport {
        text: String::new(),
        checks: Vec::new(),
        suites_run: 0,
        suites_failed: 0,
        suites_skipped: 0,
    };
    for (name, family, suite) in SUITES {
        if !opts.suite.includes(family) {
            let _ = writeln!(text, "\n[{name}] skipped (--suite {})", opts.suite.label());
            report.suites_skipped += 1;
            continue;
        }
        let _ = writeln!(text, "\n[{name}]");
        let mut checks = Checks::new(name);
        if let Err(e) = suite(opts, &root.split(name), &mut checks) {
            checks.add("suite error", false, e.to_string());
        }
        let failed = checks.items.iter().filter(|c| !c.passed).count();
        for c in &checks.items {
            if c.passed {
                let _ = writeln!(text, "  PASS  {}: {}", c.name, c.detail);
            } else {
                let _ = writeln!(text, "  FAIL  [{name}] {}: {}", c.name, c.detail);
            }
        }
        let total = checks.items.len();
        let verdict = if failed == 0 { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "  suite {verdict} ({}/{total} checks)", total - failed);
        report.suites_run += 1;
        if failed > 0 {
            report.suites_failed += 1;
        }
        report.checks.extend(checks.items);
    }
    let verdict = if report.suites_failed == 0 { "PASS" } else { "FAIL" };
    let _ = writeln!(
        text,
        "\nresult: {verdict} ({} suites passed, {} failed, {} skipped)",
        report.suites_run - report.suites_failed,
        report.suites_failed,
        report.suites_skipped
    );
    report.text = text;
    Ok(report)
}

fn sci(x: f64) -> String {
    format!("{:.3e}", x + 0.0)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gd_hyper(params: &RegressionParams, setting: &RegressionSetting) -> GdHyper {
    params.gd.unwrap_or_else(|| GdHyper::default_for(setting))
}

fn optimal_low_rank(opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let params = &opts.regression;
    let setting = regression_setting(params, rng)?;
    let d = setting.dim();
    let hyper = gd_hyper(params, &setting);
    let eps = opts.perturb.unwrap_or(0.0);
    let min = min_simplified_loss(&setting)?;
    let mut previous_gap = f64::INFINITY;
    for r in 1..=d {
        let star = optimal_rank_r(&setting, r)?;
        let reference = star.effective() + Matrix::from_element(d, d, eps);
        let closed = simplified_loss(&reference, 1.0, &setting);
        let fit = fit_rank_r(&rng.split(&format!("gd/r={r}")), &setting, r, &hyper)?;
        let rel = rel_err(fit.loss, closed);
        checks.add(
            format!("rank {r} loss"),
            rel <= GD_REL_TOL,
            format!(
                "gradient descent {} vs closed form {}, rel err {} (limit {})",
                sci(fit.loss),
                sci(closed),
                sci(rel),
                sci(GD_REL_TOL)
            ),
        );
        let frob = (fit.model.effective() - &reference).norm();
        checks.add(
            format!("rank {r} solution"),
            frob <= GD_FROBENIUS_TOL,
            format!("Frobenius distance of uU to U* {} (limit {})", sci(frob), sci(GD_FROBENIUS_TOL)),
        );
        let gap = truncation_gap(&setting, r)?;
        let direct = simplified_loss(star.kq(), star.pv(), &setting) - min;
        checks.add(
            format!("rank {r} truncation gap"),
            (gap - direct).abs() <= 1e-12 * (1.0 + min.abs()) && gap <= previous_gap,
            format!("formula {} vs loss difference {}, previous {}", sci(gap), sci(direct), sci(previous_gap)),
        );
        previous_gap = gap;
    }
    let mut worst = 0.0f64;
    let mut worst_random = f64::INFINITY;
    for k in 0..GAP_IDENTITY_POINTS {
        let mut s = rng.split("gap-identity").split_index(k as u64);
        let r = 1 + s.below(d);
        let point = FactorizedLsa::random(&mut s, d, r, 1.0 / setting.eigenvalues()[0].sqrt());
        let kq = point.kq();
        let lhs = simplified_loss(&kq, point.u, &setting) - min;
        let rhs = loss_gap_norm(&kq, point.u, &setting)?;
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
        let star = simplified_loss(optimal_rank_r(&setting, r)?.kq(), 1.0, &setting);
        worst_random = worst_random.min(simplified_loss(&kq, point.u, &setting) - star);
    }
    checks.add(
        "excess loss identity",
        worst <= 1e-10,
        format!("worst relative mismatch {} over {GAP_IDENTITY_POINTS} random points", sci(worst)),
    );
    checks.add(
        "optimum beats random rank-r points",
        worst_random >= -1e-12,
        format!("smallest excess over the rank-r optimum {}", sci(worst_random)),
    );
    Ok(())
}

fn pretraining_shift(opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let params = RegressionParams {
        n: opts.regression.pretrain_n,
        ..opts.regression.clone()
    };
    let setting = regression_setting(&params, rng)?;
    let d = setting.dim();
    let shift = 0.5 * setting.cov().trace();
    let models = [("zero model", ReducedLsa::zero(d)), ("full-rank optimum", optimal_rank_r(&setting, d)?)];
    for (label, model) in models {
        let target = simplified_loss(model.kq(), model.pv(), &setting) + shift;
        let est = empirical_pretrain_risk(&rng.split(label), &model.embed(), &setting, params.pretrain_prompts)?;
        checks.add(
            label,
            est.within(target, MC_SIGMAS),
            format!(
                "empirical risk {} ± {} vs trace loss + tr(Λ)/2 = {}, z = {:.2}",
                sci(est.mean),
                sci(est.stderr),
                sci(target),
                est.z_score(target)
            ),
        );
    }
    Ok(())
}

fn evaluation_loss(opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let params = &opts.regression;
    let setting = regression_setting(params, rng)?;
    let coords = Vector::from_vec(params.weight_coords());
    for &m in &params.m_list {
        for &r in &params.r_list {
            let lsa = optimal_rank_r(&setting, r)?;
            let decomp = WeightDecomposition::from_coordinates(&coords, r)?;
            let w = decomp.weight(&setting);
            for &sigma in &params.sigma_list {
                let closed = eval_loss_closed(&setting, m, r, &decomp, sigma)?;
                let stream = rng.split(&format!("M={m}/r={r}/sigma={sigma:e}"));
                let est = eval_loss_mc(&stream, &lsa, &setting, &w, m, sigma, params.trials)?;
                checks.add(
                    format!("M={m} r={r} sigma={sigma}"),
                    est.within(closed, MC_SIGMAS),
                    format!(
                        "closed form {} vs Monte Carlo {} ± {}, z = {:.2}",
                        sci(closed),
                        sci(est.mean),
                        sci(est.stderr),
                        est.z_score(closed)
                    ),
                );
            }
        }
    }
    Ok(())
}

fn label_moment(_opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let spectrum: Vec<f64> = (0..MOMENT_DIM).map(|i| 0.5f64.powi(i as i32)).collect();
    let cov = SpectralCovariance::with_random_basis(&mut rng.split("basis"), spectrum)
        .map_err(crate::regression::RegressionError::from)?;
    let setting = RegressionSetting::new(cov, 1)?;
    let w = crate::regression::sample_task_weight(&mut rng.split("weight"), MOMENT_DIM)?;
    let closed = label_moment_closed(&setting, &w, MOMENT_SIGMA)?;
    let (mean, stderr) = label_moment_mc(&rng.split("samples"), &setting, &w, MOMENT_SIGMA, MOMENT_SAMPLES)?;
    let mut worst = 0.0f64;
    for i in 0..MOMENT_DIM {
        for j in 0..MOMENT_DIM {
            worst = worst.max((mean[(i, j)] - closed[(i, j)]).abs() / stderr[(i, j)].max(f64::MIN_POSITIVE));
        }
    }
    checks.add(
        "E[y² x xᵀ] entrywise",
        worst <= MC_SIGMAS,
        format!("largest |z| over {} entries {:.2} at {MOMENT_SAMPLES} samples", MOMENT_DIM * MOMENT_DIM, worst),
    );
    Ok(())
}

fn behavior_gap(opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let params = &opts.regression;
    let setting = regression_setting(params, rng)?;
    let d = setting.dim();
    let coords = Vector::from_vec(params.weight_coords());
    let n = setting.n_pretrain() as f64;
    let tr = setting.cov().trace();
    let lam = setting.eigenvalues().clone();
    let mut worst_diff = 0.0f64;
    let mut min_gap = f64::INFINITY;
    let mut worst_slope = 0.0f64;
    let mut monotone_violation: Option<String> = None;
    let mut cells = 0usize;
    let mut sigmas = params.sigma_list.clone();
    sigmas.push(1.0);
    for &m in &params.m_list {
        for r in 1..=d {
            let signal = WeightDecomposition::from_coordinates(&coords, r)?.signal;
            for r_prime in r..=d {
                let at_r = WeightDecomposition::from_coordinates(&signal, r)?;
                let at_rp = WeightDecomposition::from_coordinates(&signal, r_prime)?;
                for &sigma in &sigmas {
                    let gap = behavior_gap_closed(&setting, m, r, r_prime, &signal, sigma)?;
                    let diff = eval_loss_closed(&setting, m, r_prime, &at_rp, sigma)?
                        - eval_loss_closed(&setting, m, r, &at_r, sigma)?;
                    worst_diff = worst_diff.max((gap - diff).abs());
                    min_gap = min_gap.min(gap);
                    cells += 1;
                }
                let g0 = behavior_gap_closed(&setting, m, r, r_prime, &signal, 0.0)?;
                let g1 = behavior_gap_closed(&setting, m, r, r_prime, &signal, 1.0)?;
                let expected: f64 = (r..r_prime)
                    .map(|i| (n * lam[i] / ((n + 1.0) * lam[i] + tr)).powi(2))
                    .sum::<f64>()
                    / m as f64;
                worst_slope = worst_slope.max((g1 - g0 - expected).abs());
            }
            if params.r_list.contains(&r) {
                for &sigma in params.sigma_list.iter().filter(|s| **s > 0.0) {
                    let mut prev = f64::NEG_INFINITY;
                    for r_prime in r..=d {
                        let at = WeightDecomposition::from_coordinates(&signal, r_prime)?;
                        let loss = eval_loss_closed(&setting, m, r_prime, &at, sigma)?;
                        if loss < prev && monotone_violation.is_none() {
                            monotone_violation = Some(format!("M={m} r={r} sigma={sigma} r'={r_prime}"));
                        }
                        prev = loss;
                    }
                }
            }
        }
    }
    checks.add(
        "gap equals loss difference",
        worst_diff <= GAP_TOL,
        format!("worst |gap − difference| {} over {cells} cells (limit {})", sci(worst_diff), sci(GAP_TOL)),
    );
    checks.add("gap is nonnegative", min_gap >= 0.0, format!("smallest gap {}", sci(min_gap)));
    checks.add(
        "gap is affine in sigma²",
        worst_slope <= SLOPE_TOL,
        format!("worst two-point slope error {} (limit {})", sci(worst_slope), sci(SLOPE_TOL)),
    );
    checks.add(
        "loss non-decreasing in rank beyond the signal",
        monotone_violation.is_none(),
        monotone_violation.map_or_else(|| "holds for every sigma > 0".to_string(), |c| format!("decreases at {c}")),
    );
    Ok(())
}

fn parity_construction(opts: &VerifyOptions, _rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    for nu2 in CONSTRUCTION_NU2 {
        for gamma in CONSTRUCTION_GAMMAS {
            let probe = ParityConfig::new(1, nu2, gamma, 0.0)?;
            let p_t = if nu2 > 1 { probe.threshold() / 2.0 } else { 0.0 };
            let cfg = probe.with_p_t(p_t)?;
            let large = build_optimal(&cfg, ModelSize::Large);
            let loss = exact_population_loss(&large, &cfg);
            let uncovered = uncovered_patterns(&large, &all_tasks(cfg.d()));
            checks.add(
                format!("large model nu2={nu2} gamma={gamma}"),
                loss == 0.0 && uncovered.is_empty(),
                format!("exact loss {} at p_T={}, {} uncovered patterns", sci(loss), sci(p_t), uncovered.len()),
            );
        }
    }
    let report = bruteforce_min_heads(4)?;
    let below_complete = report.by_size.iter().filter(|(size, _, _)| *size < report.min_heads).map(|r| r.2).sum::<u64>();
    checks.add(
        "minimal head count at d=4",
        report.min_heads == 6 && below_complete == 0,
        format!(
            "smallest complete cover {} heads, {} complete covers below it",
            report.min_heads, below_complete
        ),
    );
    let mut pairs: Vec<(u32, u32)> = SMALL_REGIME_PAIRS.to_vec();
    let own = (opts.parity.nu1, opts.parity.nu2);
    if own.0 < own.1 && !pairs.contains(&own) {
        pairs.push(own);
    }
    for (nu1, nu2) in pairs {
        for gamma in CONSTRUCTION_GAMMAS {
            let probe = ParityConfig::new(nu1, nu2, gamma, 0.0)?;
            let cfg = probe.with_p_t(probe.threshold() / 2.0)?;
            let small = build_optimal(&cfg, ModelSize::Small);
            let b = exact_loss_breakdown(&small, &cfg);
            checks.add(
                format!("small model nu1={nu1} nu2={nu2} gamma={gamma}"),
                b.important == 0.0 && b.less_important > 0.0 && b.total == cfg.p_t() * b.less_important,
                format!(
                    "important-task loss {}, less-important loss {}, total {} = p_T × {}",
                    sci(b.important),
                    sci(b.less_important),
                    sci(b.total),
                    sci(b.less_important)
                ),
            );
        }
    }
    Ok(())
}

fn signal_noise(opts: &VerifyOptions, rng: &RngStream, checks: &mut Checks) -> Result<(), HarnessError> {
    let params = &opts.parity;
    let mut energy_order: Option<String> = None;
    for &m in &params.m_list {
        let mut by_nu: Vec<(u32, f64)> = Vec::new();
        for &(nu1, nu2) in &params.ratio_pairs {
            let cfg = ParityConfig::new(nu1, nu2, params.gamma, 0.0)?;
            let stream = rng.split(&format!("ratio/nu1={nu1}/nu2={nu2}/M={m}"));
            let ratio = projection_energy_ratio(&stream, &cfg, m, params.ratio_trials)?;
            let e1 = f64::from(nu1 + 1) / m as f64;
            let e2 = f64::from(nu2 + 1) / m as f64;
            let rr = rel_err(ratio.ratio, ratio.formula);
            let r1 = rel_err(ratio.small.mean, e1);
            let r2 = rel_err(ratio.large.mean, e2);
            checks.add(
                format!("energy ratio nu1={nu1} nu2={nu2} M={m}"),
                rr <= RATIO_REL_TOL && r1 <= ENERGY_REL_TOL && r2 <= ENERGY_REL_TOL,
                format!(
                    "ratio {} vs {} (rel {}), energies {} vs {} (rel {}), {} vs {} (rel {})",
                    sci(ratio.ratio),
                    sci(ratio.formula),
                    sci(rr),
                    sci(ratio.small.mean),
                    sci(e1),
                    sci(r1),
                    sci(ratio.large.mean),
                    sci(e2),
                    sci(r2)
                ),
            );
            by_nu.push((nu1, ratio.small.mean));
            by_nu.push((nu2, ratio.large.mean));
        }
        by_nu.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        for w in by_nu.windows(2) {
            if w[0].0 < w[1].0 && w[0].1 >= w[1].1 && energy_order.is_none() {
                energy_order = Some(format!("M={m}: nu={} gives {} ≥ nu={} gives {}", w[0].0, sci(w[0].1), w[1].0, sci(w[1].1)));
            }
        }
    }
    checks.add(
        "noise energy strictly increasing in nu",
        energy_order.is_none(),
        energy_order.unwrap_or_else(|| "holds at every M".to_string()),
    );

    let cfg = params.base()?;
    let dict = parity_dictionary(&cfg, rng)?;
    let ms: Vec<f64> = params.m_list.iter().map(|&m| m as f64).collect();
    let mut rms: Vec<Vec<f64>> = Vec::new();
    for which in [ModelSize::Small, ModelSize::Large] {
        let mut row = Vec::new();
        for &m in &params.m_list {
            let stream = rng.split(&format!("residual/{}/M={m}", which.label()));
            let stats = decomposition_residual(&stream, &cfg, &dict, which, m, params.residual_trials, ResidualMode::Idealized)?;
            row.push(stats.rms);
        }
        let slope = loglog_slope(&ms, &row);
        checks.add(
            format!("residual scaling, {} model", which.label()),
            (slope - RESIDUAL_SLOPE).abs() <= RESIDUAL_SLOPE_TOL,
            format!(
                "log-log slope {:.4} over M = {:?}, RMS {}",
                slope,
                params.m_list,
                row.iter().map(|v| sci(*v)).collect::<Vec<_>>().join(", ")
            ),
        );
        rms.push(row);
    }
    let ordered = rms[0].iter().zip(&rms[1]).all(|(s, l)| s <= l);
    checks.add(
        "small-model residual at most large-model residual",
        ordered,
        format!("checked at {} prompt lengths", ms.len()),
    );
    Ok(())
}
