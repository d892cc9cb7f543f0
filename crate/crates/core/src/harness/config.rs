//! JSON run configuration with defaults and field-named validation errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::numerics::spectral::MAX_DIM;
use crate::parity::{ParityConfig, ParityError, PromptMode, ResidualMode};
use crate::regression::GdHyper;

use super::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    RegressionSweep,
    ParitySweep,
    Verify,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; defaults to the available cores.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Output directory; the `--out` flag takes precedence.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub regression: RegressionParams,
    #[serde(default)]
    pub parity: ParityParams,
}

impl RunConfig {
    pub fn new(experiment: Experiment, seed: u64) -> Self {
        Self {
            experiment,
            seed,
            threads: None,
            out_dir: None,
            regression: RegressionParams::default(),
            parity: ParityParams::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.threads == Some(0) {
            return Err(HarnessError::config("threads", "must be at least 1"));
        }
        self.regression.validate()?;
        self.parity.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionParams {
    pub d: usize,
    /// Pretraining prompt length `N`.
    pub n: usize,
    /// Spectrum of `Λ`, non-increasing; defaults to `λ_i = 2^{-i}`.
    pub eigenvalues: Option<Vec<f64>>,
    /// Draw the eigenbasis at random from the seed instead of using `I`.
    pub random_basis: bool,
    /// Evaluation weight in eigen-coordinates `Qᵀw`; defaults to `(1, ½, ¼, …)`
    /// with the last coordinate zero.
    pub weight: Option<Vec<f64>>,
    pub m_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub sigma_list: Vec<f64>,
    /// Monte Carlo trials per evaluation cell.
    pub trials: usize,
    /// Pretraining prompts `B` for the empirical risk check.
    pub pretrain_prompts: usize,
    /// Prompt length for the empirical risk check.
    pub pretrain_n: usize,
    pub gd: Option<GdHyper>,
}

impl Default for RegressionParams {
    fn default() -> Self {
        Self {
            d: 4,
            n: 8,
            eigenvalues: None,
            random_basis: true,
            weight: None,
            m_list: vec![4, 16],
            r_list: vec![1, 2, 4],
            sigma_list: vec![0.0, 0.5],
            trials: 100_000,
            pretrain_prompts: 100_000,
            pretrain_n: 16,
            gd: None,
        }
    }
}

impl RegressionParams {
    pub fn spectrum(&self) -> Vec<f64> {
        self.eigenvalues
            .clone()
            .unwrap_or_else(|| (0..self.d).map(|i| 0.5f64.powi(i as i32)).collect())
    }

    pub fn weight_coords(&self) -> Vec<f64> {
        self.weight.clone().unwrap_or_else(|| {
            (0..self.d)
                .map(|i| if i + 1 == self.d && self.d > 1 { 0.0 } else { 0.5f64.powi(i as i32) })
                .collect()
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let field = |name: &str| format!("regression.{name}");
        if self.d == 0 || self.d > MAX_DIM {
            return Err(HarnessError::config(field("d"), format!("must lie in [1, {MAX_DIM}], got {}", self.d)));
        }
        if self.n == 0 {
            return Err(HarnessError::config(field("n"), "must be at least 1"));
        }
        let spectrum = self.spectrum();
        if spectrum.len() != self.d {
            return Err(HarnessError::config(
                field("eigenvalues"),
                format!("expected {} entries, got {}", self.d, spectrum.len()),
            ));
        }
        if spectrum.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(HarnessError::config(field("eigenvalues"), "entries must be finite and positive"));
        }
        if spectrum.windows(2).any(|w| w[1] > w[0]) {
            return Err(HarnessError::config(field("eigenvalues"), "must be non-increasing"));
        }
        let weight = self.weight_coords();
        if weight.len() != self.d {
            return Err(HarnessError::config(
                field("weight"),
                format!("expected {} entries, got {}", self.d, weight.len()),
            ));
        }
        if weight.iter().any(|w| !w.is_finite()) {
            return Err(HarnessError::config(field("weight"), "entries must be finite"));
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return Err(HarnessError::config(field("m_list"), "must be non-empty with entries ≥ 1"));
        }
        if self.r_list.is_empty() || self.r_list.iter().any(|&r| r == 0 || r > self.d) {
            return Err(HarnessError::config(
                field("r_list"),
                format!("must be non-empty with entries in [1, {}]", self.d),
            ));
        }
        if self.sigma_list.is_empty() || self.sigma_list.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(HarnessError::config(field("sigma_list"), "must be non-empty with finite entries ≥ 0"));
        }
        if self.trials < 2 {
            return Err(HarnessError::config(field("trials"), "must be at least 2"));
        }
        if self.pretrain_prompts < 2 {
            return Err(HarnessError::config(field("pretrain_prompts"), "must be at least 2"));
        }
        if self.pretrain_n == 0 {
            return Err(HarnessError::config(field("pretrain_n"), "must be at least 1"));
        }
        if let Some(gd) = &self.gd {
            if !(gd.lr.is_finite() && gd.lr > 0.0) {
                return Err(HarnessError::config(field("gd.lr"), "must be finite and positive"));
            }
            if gd.steps == 0 {
                return Err(HarnessError::config(field("gd.steps"), "must be at least 1"));
            }
            if gd.restarts == 0 {
                return Err(HarnessError::config(field("gd.restarts"), "must be at least 1"));
            }
            if !(gd.tol.is_finite() && gd.tol > 0.0) {
                return Err(HarnessError::config(field("gd.tol"), "must be finite and positive"));
            }
        }
        Ok(())
    }
}

/// Residual statistic modes, named as in the CSV `mode` column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualModeName {
    Idealized,
    EmpiricalIid,
    EmpiricalBalanced,
}

impl ResidualModeName {
    pub fn mode(self) -> ResidualMode {
        match self {
            ResidualModeName::Idealized => ResidualMode::Idealized,
            ResidualModeName::EmpiricalIid => ResidualMode::Empirical(PromptMode::Iid),
            ResidualModeName::EmpiricalBalanced => ResidualMode::Empirical(PromptMode::Balanced),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParityParams {
    pub nu1: u32,
    pub nu2: u32,
    pub gamma: f64,
    /// Less-important task probabilities; defaults to `0` and half the threshold.
    pub p_t: Option<Vec<f64>>,
    pub m_list: Vec<usize>,
    /// `(ν₁, ν₂)` pairs for the projection energy ratio.
    pub ratio_pairs: Vec<(u32, u32)>,
    pub ratio_trials: usize,
    /// Prompt length `N` for the Monte Carlo hinge loss.
    pub loss_n: usize,
    pub loss_trials: usize,
    pub residual_trials: usize,
    pub residual_modes: Vec<ResidualModeName>,
}

impl Default for ParityParams {
    fn default() -> Self {
        Self {
            nu1: 1,
            nu2: 3,
            gamma: 0.1,
            p_t: None,
            m_list: vec![16, 64, 256, 1024],
            ratio_pairs: vec![(1, 2), (1, 3), (2, 3)],
            ratio_trials: 100_000,
            loss_n: 1024,
            loss_trials: 10_000,
            residual_trials: 20_000,
            residual_modes: vec![
                ResidualModeName::Idealized,
                ResidualModeName::EmpiricalIid,
                ResidualModeName::EmpiricalBalanced,
            ],
        }
    }
}

fn parity_field(err: ParityError, prefix: &str) -> HarnessError {
    match err {
        ParityError::InvalidConfig { field, reason } => HarnessError::config(format!("{prefix}{field}"), reason),
        other => HarnessError::Parity(other),
    }
}

impl ParityParams {
    /// Base config at `p_T = 0`.
    pub fn base(&self) -> Result<ParityConfig, HarnessError> {
        ParityConfig::new(self.nu1, self.nu2, self.gamma, 0.0).map_err(|e| parity_field(e, "parity."))
    }

    pub fn p_t_values(&self) -> Result<Vec<f64>, HarnessError> {
        match &self.p_t {
            Some(v) => Ok(v.clone()),
            None => {
                let base = self.base()?;
                if base.nu1() == base.nu2() {
                    Ok(vec![0.0])
                } else {
                    Ok(vec![0.0, base.threshold() / 2.0])
                }
            }
        }
    }

    /// One validated config per `p_T` value.
    pub fn configs(&self) -> Result<Vec<ParityConfig>, HarnessError> {
        let base = self.base()?;
        self.p_t_values()?
            .into_iter()
            .map(|p| base.with_p_t(p).map_err(|e| parity_field(e, "parity.")))
            .collect()
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let configs = self.configs()?;
        if configs.is_empty() {
            return Err(HarnessError::config("parity.p_t", "must be non-empty"));
        }
        if self.m_list.is_empty() || self.m_list.iter().any(|&m| m < 4) {
            return Err(HarnessError::config("parity.m_list", "must be non-empty with entries ≥ 4"));
        }
        for &(nu1, nu2) in &self.ratio_pairs {
            ParityConfig::new(nu1, nu2, self.gamma, 0.0).map_err(|e| parity_field(e, "parity.ratio_pairs."))?;
        }
        if self.ratio_trials < 2 {
            return Err(HarnessError::config("parity.ratio_trials", "must be at least 2"));
        }
        if self.loss_n == 0 {
            return Err(HarnessError::config("parity.loss_n", "must be at least 1"));
        }
        if self.loss_trials < 2 {
            return Err(HarnessError::config("parity.loss_trials", "must be at least 2"));
        }
        if self.residual_trials == 0 {
            return Err(HarnessError::config("parity.residual_trials", "must be at least 1"));
        }
        Ok(())
    }
}

pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig, HarnessError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse_config(&text, path)
}
