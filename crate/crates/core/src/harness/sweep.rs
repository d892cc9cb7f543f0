//! Regression and parity sweeps: CSV tables plus a manifest per run.

use std::path::Path;

use crate::numerics::{make_rng, RngStream, SpectralCovariance, Vector};
use crate::parity::{
    build_optimal, decomposition_residual, embed_model, exact_population_loss, loglog_slope,
    mc_population_loss, projection_energy_ratio, Dictionary, ModelSize, ParityConfig,
};
use crate::regression::{
    behavior_gap_closed, eval_loss_closed, eval_loss_mc, fit_rank_r, optimal_rank_r, simplified_loss,
    GdHyper, RegressionError, RegressionSetting, WeightDecomposition,
};

use super::config::{ParityParams, RegressionParams, RunConfig};
use super::output::{ensure_dir, format_float, RunManifest, Table};
use super::HarnessError;

const MODELS: [ModelSize; 2] = [ModelSize::Small, ModelSize::Large];

/// Covariance and pretraining length described by `params`; the eigenbasis
/// is drawn from `rng` when `random_basis` is set.
pub fn regression_setting(params: &RegressionParams, rng: &RngStream) -> Result<RegressionSetting, HarnessError> {
    let spectrum = params.spectrum();
    let cov = if params.random_basis {
        SpectralCovariance::with_random_basis(&mut rng.split("basis"), spectrum)
    } else {
        SpectralCovariance::diagonal(spectrum)
    }
    .map_err(RegressionError::from)?;
    Ok(RegressionSetting::new(cov, params.n)?)
}

pub fn regression_eval_table(
    params: &RegressionParams,
    setting: &RegressionSetting,
    rng: &RngStream,
    seed: u64,
) -> Result<Table, HarnessError> {
    let mut table = Table::new(
        "regression_eval.csv",
        &["seed", "d", "N", "M", "r", "sigma", "closed_form", "mc_mean", "mc_stderr", "gap_formula"],
    );
    let d = setting.dim();
    let coords = Vector::from_vec(params.weight_coords());
    for &m in &params.m_list {
        for &r in &params.r_list {
            let lsa = optimal_rank_r(setting, r)?;
            let decomp = WeightDecomposition::from_coordinates(&coords, r)?;
            let w = decomp.weight(setting);
            for &sigma in &params.sigma_list {
                let closed = eval_loss_closed(setting, m, r, &decomp, sigma)?;
                let stream = rng.split(&format!("eval/M={m}/r={r}/sigma={sigma:e}"));
                let mc = eval_loss_mc(&stream, &lsa, setting, &w, m, sigma, params.trials)?;
                let gap = behavior_gap_closed(setting, m, r, d, &decomp.signal, sigma)?;
                table.push(vec![
                    seed.to_string(),
                    d.to_string(),
                    params.n.to_string(),
                    m.to_string(),
                    r.to_string(),
                    format_float(sigma),
                    format_float(closed),
                    format_float(mc.mean),
                    format_float(mc.stderr),
                    format_float(gap),
                ]);
            }
        }
    }
    Ok(table)
}

pub fn regression_opt_table(
    params: &RegressionParams,
    setting: &RegressionSetting,
    rng: &RngStream,
    seed: u64,
) -> Result<Table, HarnessError> {
    let mut table = Table::new(
        "regression_opt.csv",
        &["seed", "r", "gd_loss", "closed_loss", "rel_err", "frobenius_err"],
    );
    let hyper = params.gd.unwrap_or_else(|| GdHyper::default_for(setting));
    for &r in &params.r_list {
        let star = optimal_rank_r(setting, r)?;
        let closed = simplified_loss(star.kq(), star.pv(), setting);
        let fit = fit_rank_r(&rng.split(&format!("gd/r={r}")), setting, r, &hyper)?;
        let rel = (fit.loss - closed).abs() / closed.abs().max(f64::MIN_POSITIVE);
        let frob = (fit.model.effective() - star.effective()).norm();
        table.push(vec![
            seed.to_string(),
            r.to_string(),
            format_float(fit.loss),
            format_float(closed),
            format_float(rel),
            format_float(frob),
        ]);
    }
    Ok(table)
}

pub fn run_regression_sweep(cfg: &RunConfig, out: &Path, threads: usize) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new(cfg, threads);
    let rng = make_rng(cfg.seed).split("regression-sweep");
    let params = &cfg.regression;
    let setting = regression_setting(params, &rng)?;
    for table in [
        regression_eval_table(params, &setting, &rng, cfg.seed)?,
        regression_opt_table(params, &setting, &rng, cfg.seed)?,
    ] {
        manifest.tables.insert(table.name, table.write(out)?);
    }
    manifest.write(out)?;
    Ok(manifest)
}

pub fn parity_dictionary(cfg: &ParityConfig, rng: &RngStream) -> Result<Dictionary, HarnessError> {
    Ok(Dictionary::random(&mut rng.split("dictionary"), cfg.d())?)
}

pub fn parity_loss_table(params: &ParityParams, rng: &RngStream, seed: u64) -> Result<Table, HarnessError> {
    let mut table = Table::new(
        "parity_loss.csv",
        &["seed", "model", "p_T", "exact_loss", "mc_mean", "mc_stderr"],
    );
    let configs = params.configs()?;
    let dict = parity_dictionary(&configs[0], rng)?;
    for cfg in &configs {
        for which in MODELS {
            let diag = build_optimal(cfg, which);
            let exact = exact_population_loss(&diag, cfg);
            let model = embed_model(&diag, &dict)?;
            let stream = rng.split(&format!("loss/{}/p_T={:e}", which.label(), cfg.p_t()));
            let mc = mc_population_loss(&stream, &model, &dict, cfg, params.loss_n, params.loss_trials)?;
            table.push(vec![
                seed.to_string(),
                which.label().to_string(),
                format_float(cfg.p_t()),
                format_float(exact),
                format_float(mc.mean),
                format_float(mc.stderr),
            ]);
        }
    }
    Ok(table)
}

pub fn parity_ratio_table(params: &ParityParams, rng: &RngStream, seed: u64) -> Result<Table, HarnessError> {
    let mut table = Table::new(
        "parity_ratio.csv",
        &["seed", "nu1", "nu2", "M", "mc_ratio", "formula_ratio", "energy_small", "energy_large"],
    );
    for &(nu1, nu2) in &params.ratio_pairs {
        let cfg = ParityConfig::new(nu1, nu2, params.gamma, 0.0)?;
        for &m in &params.m_list {
            let stream = rng.split(&format!("ratio/nu1={nu1}/nu2={nu2}/M={m}"));
            let ratio = projection_energy_ratio(&stream, &cfg, m, params.ratio_trials)?;
            table.push(vec![
                seed.to_string(),
                nu1.to_string(),
                nu2.to_string(),
                m.to_string(),
                format_float(ratio.ratio),
                format_float(ratio.formula),
                format_float(ratio.small.mean),
                format_float(ratio.large.mean),
            ]);
        }
    }
    Ok(table)
}

/// Residual table and the log-log slope of RMS against `M` per
/// `(mode, model)`, keyed `slope/<mode>/<model>`.
pub fn parity_residual_table(
    params: &ParityParams,
    rng: &RngStream,
    seed: u64,
) -> Result<(Table, Vec<(String, f64)>), HarnessError> {
    let mut table = Table::new(
        "parity_residual.csv",
        &["seed", "model", "mode", "M", "rms", "max_abs"],
    );
    let cfg = params.base()?;
    let dict = parity_dictionary(&cfg, rng)?;
    let ms: Vec<f64> = params.m_list.iter().map(|&m| m as f64).collect();
    let mut slopes = Vec::new();
    for name in &params.residual_modes {
        let mode = name.mode();
        for which in MODELS {
            let mut rms = Vec::with_capacity(params.m_list.len());
            for &m in &params.m_list {
                let stream = rng.split(&format!("residual/{}/{}/M={m}", mode.label(), which.label()));
                let stats = decomposition_residual(&stream, &cfg, &dict, which, m, params.residual_trials, mode)?;
                rms.push(stats.rms);
                table.push(vec![
                    seed.to_string(),
                    which.label().to_string(),
                    mode.label().to_string(),
                    m.to_string(),
                    format_float(stats.rms),
                    format_float(stats.max_abs),
                ]);
            }
            if ms.len() >= 2 {
                slopes.push((format!("slope/{}/{}", mode.label(), which.label()), loglog_slope(&ms, &rms)));
            }
        }
    }
    Ok((table, slopes))
}

pub fn run_parity_sweep(cfg: &RunConfig, out: &Path, threads: usize) -> Result<RunManifest, HarnessError> {
    cfg.validate()?;
    ensure_dir(out)?;
    let mut manifest = RunManifest::new(cfg, threads);
    let rng = make_rng(cfg.seed).split("parity-sweep");
    let params = &cfg.parity;
    let loss = parity_loss_table(params, &rng, cfg.seed)?;
    let ratio = parity_ratio_table(params, &rng, cfg.seed)?;
    let (residual, slopes) = parity_residual_table(params, &rng, cfg.seed)?;
    for table in [loss, ratio, residual] {
        manifest.tables.insert(table.name, table.write(out)?);
    }
    manifest.summary.extend(slopes);
    manifest.write(out)?;
    Ok(manifest)
}
