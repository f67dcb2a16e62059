//! Run configuration keyed by the reference parameter names.

use std::path::Path;

use levcycle::{FastSteps, ModelParams};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `n` as written in a config file: a count or `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepsSetting {
    Count(u32),
    Label(String),
}

impl StepsSetting {
    pub fn to_steps(&self) -> Result<FastSteps, CliError> {
        match self {
            StepsSetting::Count(n) => Ok(FastSteps::Finite(*n)),
            StepsSetting::Label(s) => s.parse().map_err(|e: levcycle::Error| CliError::Config(e.to_string())),
        }
    }
}

/// Everything a command needs. Model keys use the reference table's names;
/// `sigma_eps` is a volatility and `sigma_f_ratio` is `sqrt(Sigma_f / Sigma_eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    #[serde(rename = "M")]
    pub assets: u32,
    #[serde(rename = "N")]
    pub banks: u32,
    pub nim: f64,
    pub gamma: f64,
    pub sigma_eps: f64,
    pub sigma_f_ratio: f64,
    #[serde(rename = "A0")]
    pub a0: f64,
    #[serde(rename = "E0")]
    pub e0: Option<f64>,
    pub c: f64,
    pub alpha: f64,
    pub omega: f64,
    pub n: StepsSetting,
    pub drift: f64,

    pub kind: Option<String>,
    pub param: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub steps: Option<usize>,
    pub y_param: Option<String>,
    pub y_from: Option<f64>,
    pub y_to: Option<f64>,
    pub y_steps: Option<usize>,
    pub n_values: Option<Vec<u32>>,
    pub seed: u64,
    pub seeds: usize,
    #[serde(rename = "T")]
    pub periods: Option<usize>,
    pub transient: Option<usize>,
    pub record: Option<usize>,
    pub iterations: Option<usize>,
    pub insolvency: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            assets: 60,
            banks: 30,
            nim: 0.08,
            gamma: 100.0,
            sigma_eps: 0.03,
            sigma_f_ratio: 0.1,
            a0: 100.0,
            e0: None,
            c: 0.1,
            alpha: 1.64,
            omega: 0.4,
            n: StepsSetting::Label("inf".into()),
            drift: 0.0,
            kind: None,
            param: None,
            from: None,
            to: None,
            steps: None,
            y_param: None,
            y_from: None,
            y_to: None,
            y_steps: None,
            n_values: None,
            seed: 0,
            seeds: 50,
            periods: None,
            transient: None,
            record: None,
            iterations: None,
            insolvency: None,
        }
    }
}

impl RunConfig {
    /// Reads TOML, or JSON when the file ends in `.json`.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
        }
    }

    pub fn model(&self) -> Result<ModelParams, CliError> {
        let sigma_eps = self.sigma_eps * self.sigma_eps;
        let p = ModelParams {
            assets: self.assets,
            banks: self.banks,
            nim: self.nim,
            gamma: self.gamma,
            sigma_eps,
            sigma_f: self.sigma_f_ratio * self.sigma_f_ratio * sigma_eps,
            c: self.c,
            alpha: self.alpha,
            omega: self.omega,
            n: self.n.to_steps()?,
            a0: self.a0,
            e0: self.e0,
            drift: self.drift,
        };
        p.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(p)
    }
}
