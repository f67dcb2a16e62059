//! Leverage and diversification chosen under the VaR constraint.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Slow variables of the system at one decision time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowState {
    pub lambda: f64,
    /// Expected diversifiable variance.
    pub sigma_d: f64,
    /// Expected systematic variance.
    pub sigma_u: f64,
    pub m: f64,
}

impl SlowState {
    /// Optimal portfolio choice given the expectations `(sigma_d, sigma_u)`.
    pub fn from_expectations(sigma_d: f64, sigma_u: f64, p: &ModelParams) -> Result<(Self, DomainFlags)> {
        let lambda = solve_leverage(sigma_d, sigma_u, p)?;
        let m = optimal_diversification(lambda, sigma_d, sigma_u, p.alpha)?;
        let state = SlowState { lambda, sigma_d, sigma_u, m };
        Ok((state, DomainFlags::check(&state, p)))
    }

    /// Excess leverage lambda - 1.
    pub fn excess_leverage(&self) -> f64 {
        self.lambda - 1.0
    }
}

/// Which stationarity bounds a state violates. Values are never clamped here.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainFlags {
    /// lambda outside [1, gamma + 1).
    pub leverage: bool,
    /// m outside (0, M].
    pub diversification: bool,
}

impl DomainFlags {
    pub fn check(s: &SlowState, p: &ModelParams) -> Self {
        DomainFlags {
            leverage: !p.in_leverage_domain(s.lambda),
            diversification: !(s.m > 0.0 && s.m <= p.assets as f64),
        }
    }

    pub fn any(self) -> bool {
        self.leverage || self.diversification
    }
}

/// Expected variance of an equally weighted portfolio of `m` assets.
pub fn portfolio_variance(sigma_d: f64, sigma_u: f64, m: f64) -> f64 {
    sigma_d / m + sigma_u
}

/// Diversification implied by a binding VaR constraint at leverage `lambda`.
pub fn optimal_diversification(lambda: f64, sigma_d: f64, sigma_u: f64, alpha: f64) -> Result<f64> {
    let denominator = 1.0 / (alpha * alpha * lambda * lambda) - sigma_u;
    if !(denominator > 0.0) {
        return Err(Error::VarInfeasible { denominator });
    }
    Ok(sigma_d / denominator)
}

/// Optimal leverage: the unique positive root of the first-order condition.
///
/// Substituting `x = sqrt(lambda)` turns the condition into
/// `sigma_u x^4 + b x - a = 0` with `a = 1/alpha^2` and
/// `b = sqrt(sigma_d / K) / alpha`, `K = nim / (2c)`. The left side is
/// increasing on `x > 0`, negative at 0 and positive at the VaR bound, so
/// bisection brackets the root; Newton finishes it.
pub fn solve_leverage(sigma_d: f64, sigma_u: f64, p: &ModelParams) -> Result<f64> {
    if !(sigma_d > 0.0) || !sigma_d.is_finite() {
        return Err(Error::NonPositiveRisk(sigma_d));
    }
    if !(sigma_u >= 0.0) || !sigma_u.is_finite() {
        return Err(Error::InvalidArgument(format!("systematic variance must be >= 0, got {sigma_u}")));
    }
    let alpha = p.alpha;
    let lambda_bound = if sigma_u > 0.0 { 1.0 / (alpha * sigma_u.sqrt()) } else { f64::INFINITY };
    if !(p.c > 0.0) {
        // Free diversification pushes the root onto the VaR bound itself.
        return Err(Error::NoRootInBracket { upper: lambda_bound });
    }

    let k = p.nim / (2.0 * p.c);
    let a = 1.0 / (alpha * alpha);
    let b = (sigma_d / k).sqrt() / alpha;
    if sigma_u == 0.0 {
        let x = a / b;
        return Ok(x * x);
    }

    let q = |x: f64| sigma_u * x.powi(4) + b * x - a;
    let dq = |x: f64| 4.0 * sigma_u * x.powi(3) + b;
    let upper = (a / sigma_u).powf(0.25).min(a / b);
    let (mut lo, mut hi) = (0.0, upper);
    if !(q(hi) >= 0.0) {
        return Err(Error::NoRootInBracket { upper: lambda_bound });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..4 {
        let step = q(x) / dq(x);
        x -= step;
        if step.abs() <= f64::EPSILON * x {
            break;
        }
    }
    Ok(x * x)
}

/// Relative residual of the leverage first-order condition written in its
/// cube-root form. Zero at the optimum.
pub fn leverage_residual(lambda: f64, sigma_d: f64, sigma_u: f64, p: &ModelParams) -> f64 {
    let k = p.nim / (2.0 * p.c);
    let lhs = sigma_d.cbrt() / ((p.alpha * p.alpha).cbrt() * k.cbrt() * lambda);
    let gap = 1.0 / (p.alpha * p.alpha * lambda * lambda) - sigma_u;
    let rhs = (gap * gap).cbrt();
    (lhs - rhs) / lhs
}
