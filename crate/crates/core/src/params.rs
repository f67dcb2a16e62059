//! Exogenous model constants.
//!
//! Variances are stored at the slow (decision) time scale. The fast-scale
//! noise variances seen inside a window are `sigma_eps / n` and `sigma_f / n`,
//! so changing `n` leaves the slow-scale aggregates fixed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of portfolio rebalancings inside one decision period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastSteps {
    Finite(u32),
    /// The `n -> inf` regime in which estimators equal their expectations.
    Asymptotic,
}

impl FastSteps {
    pub fn finite(self) -> Option<u32> {
        match self {
            FastSteps::Finite(n) => Some(n),
            FastSteps::Asymptotic => None,
        }
    }
}

impl fmt::Display for FastSteps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FastSteps::Finite(n) => write!(f, "{n}"),
            FastSteps::Asymptotic => f.write_str("inf"),
        }
    }
}

impl FromStr for FastSteps {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "asymptotic" => Ok(FastSteps::Asymptotic),
            other => other
                .parse::<u32>()
                .map(FastSteps::Finite)
                .map_err(|_| Error::InvalidParams(format!("n must be a positive integer or 'inf', got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Number of risky assets, M.
    pub assets: u32,
    /// Number of banks, N.
    pub banks: u32,
    /// Net interest margin mu - r_L per holding period.
    pub nim: f64,
    /// Asset liquidity gamma.
    pub gamma: f64,
    /// Idiosyncratic variance at the slow scale, Sigma_eps.
    pub sigma_eps: f64,
    /// Factor variance at the slow scale, Sigma_f.
    pub sigma_f: f64,
    /// Diversification cost per asset.
    pub c: f64,
    /// VaR quantile multiplier.
    pub alpha: f64,
    /// Expectation memory.
    pub omega: f64,
    pub n: FastSteps,
    /// Initial asset size of each bank.
    pub a0: f64,
    /// Initial equity; `None` means `a0 / lambda_0`.
    pub e0: Option<f64>,
    /// Expected-return drift of the exogenous return component (fast scale).
    pub drift: f64,
}

impl ModelParams {
    /// The reference parameter set: M=60, N=30, mu-r_L=0.08, gamma=100,
    /// sqrt(Sigma_eps)=0.03, sqrt(Sigma_f/Sigma_eps)=0.1, A0=100, c=0.1,
    /// alpha=1.64. Memory defaults to 0.4 and the regime to n -> inf.
    pub fn table1() -> Self {
        let sigma_eps = 0.03f64 * 0.03;
        ModelParams {
            assets: 60,
            banks: 30,
            nim: 0.08,
            gamma: 100.0,
            sigma_eps,
            sigma_f: 0.1 * 0.1 * sigma_eps,
            c: 0.1,
            alpha: 1.64,
            omega: 0.4,
            n: FastSteps::Asymptotic,
            a0: 100.0,
            e0: None,
            drift: 0.0,
        }
    }

    /// One bank, one asset, no factor: the reduced model.
    pub fn reduced(gamma: f64, alpha: f64, sigma_eps: f64, omega: f64) -> Self {
        ModelParams {
            assets: 1,
            banks: 1,
            gamma,
            sigma_eps,
            sigma_f: 0.0,
            alpha,
            omega,
            ..ModelParams::table1()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.assets < 1 {
            return fail("M must be >= 1");
        }
        if self.banks < 1 {
            return fail("N must be >= 1");
        }
        if !(self.nim > 0.0) {
            return fail("nim must be > 0");
        }
        if !(self.gamma > 0.0) {
            return fail("gamma must be > 0");
        }
        if !(self.sigma_eps > 0.0) || !self.sigma_eps.is_finite() {
            return fail("Sigma_eps must be > 0");
        }
        if !(self.sigma_f >= 0.0) || !self.sigma_f.is_finite() {
            return fail("Sigma_f must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.c) {
            return fail("c must lie in [0, 1]");
        }
        if !(self.alpha > 0.0) {
            return fail("alpha must be > 0");
        }
        if !(0.0..=1.0).contains(&self.omega) {
            return fail("omega must lie in [0, 1]");
        }
        if self.n == FastSteps::Finite(0) {
            return fail("n must be >= 1");
        }
        if !(self.a0 > 0.0) {
            return fail("A0 must be > 0");
        }
        if let Some(e0) = self.e0 {
            if !(e0 > 0.0) {
                return fail("E0 must be > 0");
            }
        }
        if !self.drift.is_finite() {
            return fail("drift must be finite");
        }
        Ok(())
    }

    /// Upper end of the stationary leverage domain, gamma + 1.
    pub fn leverage_ceiling(&self) -> f64 {
        self.gamma + 1.0
    }

    pub fn in_leverage_domain(&self, lambda: f64) -> bool {
        (1.0..self.leverage_ceiling()).contains(&lambda)
    }

    /// Returns a copy with `param` set to `value`.
    pub fn with(&self, param: SweepParam, value: f64) -> Result<Self> {
        let mut p = self.clone();
        match param {
            SweepParam::Omega => p.omega = value,
            SweepParam::Alpha => p.alpha = value,
            SweepParam::C => p.c = value,
            SweepParam::Gamma => p.gamma = value,
            SweepParam::Assets => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::InvalidArgument(format!("M must be a positive integer, got {value}")));
                }
                p.assets = value as u32;
            }
            SweepParam::SigmaEps => {
                // Keep the factor-to-idiosyncratic ratio fixed.
                let ratio = if p.sigma_eps > 0.0 { p.sigma_f / p.sigma_eps } else { 0.0 };
                p.sigma_eps = value * value;
                p.sigma_f = ratio * p.sigma_eps;
            }
        }
        p.validate()?;
        Ok(p)
    }

    pub fn get(&self, param: SweepParam) -> f64 {
        match param {
            SweepParam::Omega => self.omega,
            SweepParam::Alpha => self.alpha,
            SweepParam::C => self.c,
            SweepParam::Gamma => self.gamma,
            SweepParam::Assets => self.assets as f64,
            SweepParam::SigmaEps => self.sigma_eps.sqrt(),
        }
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::table1()
    }
}

/// Parameters that sweeps and contour grids can vary.
///
/// `SigmaEps` is the idiosyncratic *volatility* sqrt(Sigma_eps), matching the
/// way the reference table quotes it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Omega,
    Alpha,
    C,
    Gamma,
    #[serde(rename = "M")]
    Assets,
    SigmaEps,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Omega => "omega",
            SweepParam::Alpha => "alpha",
            SweepParam::C => "c",
            SweepParam::Gamma => "gamma",
            SweepParam::Assets => "M",
            SweepParam::SigmaEps => "sigma_eps",
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "omega" => SweepParam::Omega,
            "alpha" => SweepParam::Alpha,
            "c" => SweepParam::C,
            "gamma" => SweepParam::Gamma,
            "M" | "assets" => SweepParam::Assets,
            "sigma_eps" | "Sigma_eps" => SweepParam::SigmaEps,
            other => return Err(Error::InvalidArgument(format!("unknown sweep parameter {other:?}"))),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_is_valid() {
        let p = ModelParams::table1();
        p.validate().unwrap();
        assert_eq!(p.assets, 60);
        assert!((p.sigma_f / p.sigma_eps - 0.01).abs() < 1e-15);
        assert!((p.sigma_eps.sqrt() - 0.03).abs() < 1e-15);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut p = ModelParams::table1();
        p.omega = 1.5;
        assert!(p.validate().is_err());
        let mut p = ModelParams::table1();
        p.c = -0.1;
        assert!(p.validate().is_err());
        let mut p = ModelParams::table1();
        p.n = FastSteps::Finite(0);
        assert!(p.validate().is_err());
    }

    #[test]
    fn sigma_sweep_keeps_factor_ratio() {
        let p = ModelParams::table1().with(SweepParam::SigmaEps, 0.05).unwrap();
        assert!((p.sigma_eps - 0.0025).abs() < 1e-15);
        assert!((p.sigma_f - 0.000025).abs() < 1e-15);
        assert!((p.get(SweepParam::SigmaEps) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn fast_steps_parse() {
        assert_eq!("inf".parse::<FastSteps>().unwrap(), FastSteps::Asymptotic);
        assert_eq!("1000".parse::<FastSteps>().unwrap(), FastSteps::Finite(1000));
        assert!("-3".parse::<FastSteps>().is_err());
    }
}
