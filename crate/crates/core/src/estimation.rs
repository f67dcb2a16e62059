//! Return-process estimators, slow-scale aggregation and adaptive expectations.
//!
//! Fast-scale returns follow `r_k = Phi r_{k-1} + eps_k + f_k 1` with
//! `Phi = (phi - beta) I + beta J`. `Phi` has two distinct eigenvalues: `mu1`
//! on the all-ones direction and `mu2` on its orthogonal complement, and the
//! noise covariance shares that eigenbasis. Everything below exploits this.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fast::ReturnWindow;
use crate::params::ModelParams;
use crate::phi::build_phi;

/// Fast-scale variance/covariance and the lag sums used for aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregationTerms {
    pub theta0: f64,
    pub psi0: f64,
    /// Sum over `k >= 1` of the lag-`k` autocovariance (diagonal).
    pub theta1: f64,
    /// Same for the cross-covariance.
    pub psi1: f64,
    /// Sum over `k >= 1` of `k` times the lag-`k` autocovariance.
    pub theta2: f64,
    pub psi2: f64,
}

/// Slow-scale covariance of returns aggregated over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowCovariance {
    pub sigma_d: f64,
    pub sigma_u: f64,
    pub terms: AggregationTerms,
    /// Set when `|eigenvalue|^n` is not negligible, so the infinite lag sums
    /// overstate the finite-window ones.
    pub truncation_warning: bool,
}

/// Estimated return dynamics from one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovEstimate {
    pub phi_hat: f64,
    pub beta_hat: f64,
    pub sig_eps_hat: f64,
    pub sig_f_hat: f64,
    pub theta0_hat: f64,
    pub psi0_hat: f64,
    pub sigma_d_hat: f64,
    pub sigma_u_hat: f64,
    pub truncation_warning: bool,
}

/// Maximum-likelihood estimate of `r_k = phi r_{k-1} + e_k` from a path whose
/// first element is the start value. Returns `(phi_hat, sig_eps_hat)`.
pub fn estimate_ar1(path: &[f64]) -> Result<(f64, f64)> {
    if path.len() < 2 {
        return Err(Error::InvalidArgument("AR(1) path needs a start value and at least one return".into()));
    }
    let mut s = Ar1Stats::default();
    for w in path.windows(2) {
        s.push(w[0], w[1]);
    }
    s.estimate()
}

/// Running sums sufficient for the AR(1) estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ar1Stats {
    pub n: u64,
    pub cross: f64,
    pub lag_sq: f64,
    pub cur_sq: f64,
}

impl Ar1Stats {
    #[inline]
    pub fn push(&mut self, prev: f64, cur: f64) {
        self.n += 1;
        self.cross += cur * prev;
        self.lag_sq += prev * prev;
        self.cur_sq += cur * cur;
    }

    pub fn estimate(&self) -> Result<(f64, f64)> {
        if !(self.lag_sq > 0.0) {
            return Err(Error::DegenerateWindow);
        }
        let phi = self.cross / self.lag_sq;
        let rss = (self.cur_sq - 2.0 * phi * self.cross + phi * phi * self.lag_sq).max(0.0);
        Ok((phi, rss / self.n as f64))
    }
}

/// Exact variance of the sum of `n` consecutive stationary AR(1) returns.
pub fn aggregate_variance_ar1(phi: f64, sig_eps: f64, n: u32) -> Result<f64> {
    if !(phi.abs() < 1.0) {
        return Err(Error::NonStationary(phi.abs()));
    }
    let nf = n as f64;
    if phi == 0.0 {
        return Ok(nf * sig_eps);
    }
    let pn = phi.powf(nf);
    let q = 1.0 - phi;
    let factor = 1.0 + 2.0 * phi * (1.0 - pn) / q - 2.0 * ((nf * phi - nf - 1.0) * pn * phi + phi) / (nf * q * q);
    Ok(factor * nf * sig_eps / (1.0 - phi * phi))
}

/// Stationary fast-scale variance and covariance of the VAR(1) returns.
pub fn stationary_moments(phi: f64, beta: f64, sig_eps: f64, sig_f: f64, dim: usize) -> Result<(f64, f64)> {
    let mf = dim as f64;
    let mu1 = phi + (mf - 1.0) * beta;
    let mu2 = phi - beta;
    check_modes(mu1, mu2, dim)?;
    let cp = (sig_eps + mf * sig_f) / (1.0 - mu1 * mu1);
    if dim == 1 {
        return Ok((cp, 0.0));
    }
    let cq = sig_eps / (1.0 - mu2 * mu2);
    Ok((cq * (mf - 1.0) / mf + cp / mf, (cp - cq) / mf))
}

fn check_modes(mu1: f64, mu2: f64, dim: usize) -> Result<()> {
    let radius = if dim == 1 { mu1.abs() } else { mu1.abs().max(mu2.abs()) };
    if !(radius < 1.0) {
        return Err(Error::NonStationary(radius));
    }
    Ok(())
}

/// Slow-scale `(Sigma_d, Sigma_u)` of returns aggregated over `n` fast steps.
///
/// For `dim == 1` there is no cross-section: `sigma_d` carries the whole
/// aggregated variance and `sigma_u` is zero.
pub fn covariance_slow_scale(theta0: f64, psi0: f64, phi: f64, beta: f64, dim: usize, n: f64) -> Result<SlowCovariance> {
    let mf = dim as f64;
    let (phi, beta, psi0) = if dim == 1 { (phi, 0.0, 0.0) } else { (phi, beta, psi0) };
    let mu1 = phi + (mf - 1.0) * beta;
    let mu2 = phi - beta;
    check_modes(mu1, mu2, dim)?;

    // Gamma_k = A Gamma_{k-1} on (theta, psi):
    //   theta_k = phi theta + (M-1) beta psi
    //   psi_k   = beta theta + (phi + (M-2) beta) psi
    let a = [[phi, (mf - 1.0) * beta], [beta, phi + (mf - 2.0) * beta]];
    let solve = |rhs: [f64; 2]| -> [f64; 2] {
        let m = [[1.0 - a[0][0], -a[0][1]], [-a[1][0], 1.0 - a[1][1]]];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [(rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det, (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det]
    };
    let first = solve([a[0][0] * theta0 + a[0][1] * psi0, a[1][0] * theta0 + a[1][1] * psi0]);
    let second = solve(first);
    let terms = AggregationTerms { theta0, psi0, theta1: first[0], psi1: first[1], theta2: second[0], psi2: second[1] };

    let (sigma_d, sigma_u) = if dim == 1 {
        (n * (theta0 + 2.0 * terms.theta1) - 2.0 * terms.theta2, 0.0)
    } else {
        (
            n * ((theta0 - psi0) + 2.0 * (terms.theta1 - terms.psi1)) - 2.0 * (terms.theta2 - terms.psi2),
            n * (psi0 + 2.0 * terms.psi1) - 2.0 * terms.psi2,
        )
    };
    let radius = if dim == 1 { mu1.abs() } else { mu1.abs().max(mu2.abs()) };
    Ok(SlowCovariance { sigma_d, sigma_u, terms, truncation_warning: radius.powf(n) > 1e-6 })
}

/// `(Sigma_d, Sigma_u)` implied by leverage `lambda` and diversification `m`
/// when the number of rebalancings per period grows without bound.
pub fn asymptotic_covariance(lambda: f64, m: f64, p: &ModelParams) -> Result<(f64, f64)> {
    if lambda >= p.leverage_ceiling() {
        return Err(Error::NonStationary((lambda - 1.0) / p.gamma));
    }
    let phi = build_phi(lambda, m, p);
    asymptotic_from_modes(phi.common_mode(), phi.orthogonal_mode(), p.sigma_eps, p.sigma_f, phi.dim)
}

pub(crate) fn asymptotic_from_modes(mu1: f64, mu2: f64, sigma_eps: f64, sigma_f: f64, dim: usize) -> Result<(f64, f64)> {
    let mu2 = if dim == 1 { mu1 } else { mu2 };
    check_modes(mu1, mu2, dim)?;
    let g1 = 1.0 / ((1.0 - mu1) * (1.0 - mu1));
    let g2 = 1.0 / ((1.0 - mu2) * (1.0 - mu2));
    let sigma_d = sigma_eps * g2;
    let sigma_u = sigma_f * g1 + sigma_eps / dim as f64 * (g1 - g2);
    Ok((sigma_d, sigma_u))
}

/// Point estimate of the restricted VAR(1) from the window's sufficient
/// statistics, before aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Var1Fit {
    /// Common-mode eigenvalue `phi + (M-1) beta`.
    pub mu1: f64,
    /// Orthogonal-mode eigenvalue `phi - beta`.
    pub mu2: f64,
    pub sig_eps: f64,
    pub sig_f: f64,
    pub dim: usize,
}

impl Var1Fit {
    pub fn phi(&self) -> f64 {
        (self.mu1 + (self.dim as f64 - 1.0) * self.mu2) / self.dim as f64
    }

    pub fn beta(&self) -> f64 {
        (self.mu1 - self.mu2) / self.dim as f64
    }

    /// Aggregates the fitted dynamics over `n` fast steps.
    pub fn aggregate(&self, n: f64) -> Result<CovEstimate> {
        let (phi, beta) = (self.phi(), self.beta());
        let (theta0, psi0) = stationary_moments(phi, beta, self.sig_eps, self.sig_f, self.dim)?;
        let slow = covariance_slow_scale(theta0, psi0, phi, beta, self.dim, n)?;
        Ok(CovEstimate {
            phi_hat: phi,
            beta_hat: beta,
            sig_eps_hat: self.sig_eps,
            sig_f_hat: self.sig_f,
            theta0_hat: theta0,
            psi0_hat: psi0,
            sigma_d_hat: slow.sigma_d,
            sigma_u_hat: slow.sigma_u,
            truncation_warning: slow.truncation_warning,
        })
    }
}

/// Lag-0/lag-1 moment sums for the common and orthogonal modes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Var1Stats {
    pub n: u64,
    pub dim: usize,
    /// Common mode `y = 1'r / sqrt(M)`.
    pub common: Ar1Stats,
    /// Orthogonal projection, pooled over its `M-1` directions.
    pub orth: Ar1Stats,
}

impl Var1Stats {
    pub fn new(dim: usize) -> Self {
        Var1Stats { dim, ..Default::default() }
    }

    pub fn push(&mut self, prev: &[f64], cur: &[f64]) {
        let mf = self.dim as f64;
        let (mut sp, mut sc, mut cross, mut lag_sq, mut cur_sq) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (a, b) in prev.iter().zip(cur) {
            sp += a;
            sc += b;
            cross += a * b;
            lag_sq += a * a;
            cur_sq += b * b;
        }
        self.n += 1;
        self.common.push(sp / mf.sqrt(), sc / mf.sqrt());
        self.orth.n += 1;
        self.orth.cross += cross - sp * sc / mf;
        self.orth.lag_sq += lag_sq - sp * sp / mf;
        self.orth.cur_sq += cur_sq - sc * sc / mf;
    }

    /// Closed-form maximizer of the restricted Gaussian likelihood.
    ///
    /// The likelihood factorizes over the two eigenspaces, so each mode's
    /// coefficient is its own least-squares slope. The noise variances follow
    /// from the residual variances, `sigma_f^2` being held at its boundary 0
    /// when the unconstrained value is negative.
    pub fn fit(&self) -> Result<Var1Fit> {
        if self.dim < 2 {
            return Err(Error::InvalidArgument("restricted VAR(1) needs M >= 2".into()));
        }
        if self.n < 2 {
            return Err(Error::InvalidArgument("restricted VAR(1) needs at least 2 returns".into()));
        }
        let mf = self.dim as f64;
        let nf = self.n as f64;
        let (mu1, v1) = self
            .common
            .estimate()
            .map_err(|_| Error::SingularLikelihood("common-mode lag moment is zero".into()))?;
        if !(self.orth.lag_sq > 1e-300) {
            return Err(Error::SingularLikelihood("orthogonal lag moment is zero".into()));
        }
        let mu2 = self.orth.cross / self.orth.lag_sq;
        let rss2 = (self.orth.cur_sq - 2.0 * mu2 * self.orth.cross + mu2 * mu2 * self.orth.lag_sq).max(0.0);
        let rss1 = v1 * nf;
        let mut sig_eps = rss2 / (nf * (mf - 1.0));
        let mut sig_f = (v1 - sig_eps) / mf;
        if sig_f < 0.0 {
            sig_f = 0.0;
            sig_eps = (rss1 + rss2) / (nf * mf);
        }
        if !(sig_eps > 0.0) {
            return Err(Error::SingularLikelihood("zero residual variance".into()));
        }
        Ok(Var1Fit { mu1, mu2, sig_eps, sig_f, dim: self.dim })
    }
}

/// Restricted VAR(1) maximum-likelihood estimate, aggregated to the slow scale.
pub fn estimate_var1_mle(window: &ReturnWindow) -> Result<CovEstimate> {
    if window.steps() < 3 {
        return Err(Error::InvalidArgument("window needs n >= 3".into()));
    }
    let fit = window.var1_stats().fit()?;
    fit.aggregate(window.steps() as f64)
}

/// Conditional Gaussian log-likelihood of the window under the symmetric
/// VAR(1) with innovation covariance `sig_eps I + sig_f J`.
pub fn var1_log_likelihood(window: &ReturnWindow, phi: f64, beta: f64, sig_eps: f64, sig_f: f64) -> f64 {
    let stats = window.var1_stats();
    let mf = window.dim() as f64;
    let nf = stats.n as f64;
    let mu1 = phi + (mf - 1.0) * beta;
    let mu2 = phi - beta;
    let v1 = sig_eps + mf * sig_f;
    let rss = |s: &Ar1Stats, mu: f64| s.cur_sq - 2.0 * mu * s.cross + mu * mu * s.lag_sq;
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    -0.5 * nf * (mf * ln2pi + v1.ln() + (mf - 1.0) * sig_eps.ln())
        - 0.5 * rss(&stats.common, mu1) / v1
        - 0.5 * rss(&stats.orth, mu2) / sig_eps
}

/// Adaptive expectation `omega * prev + (1 - omega) * estimate`.
pub fn ewma_update(prev: f64, estimate: f64, omega: f64) -> f64 {
    omega * prev + (1.0 - omega) * estimate
}

/// Effective memory `1 / ln(1/omega)` of the exponential weights.
pub fn effective_memory(omega: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidArgument(format!("memory must lie in (0, 1), got {omega}")));
    }
    Ok(1.0 / (1.0 / omega).ln())
}
