//! Stochastic slow-fast runs at finite `n` and seed ensembles.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::amplitude_stats;
use crate::error::{Error, Result};
use crate::estimation::{aggregate_variance_ar1, ewma_update, Ar1Stats, CovEstimate, Var1Stats};
use crate::fast::{simulate_stream, std_normal, update_balance_sheet, BankState, NoiseSource, ReturnWindow, WindowCarry};
use crate::params::ModelParams;
use crate::phi::build_phi;
use crate::portfolio::SlowState;
use crate::skeleton::{igarch_slow, IgarchState};

/// Largest admissible AR coefficient magnitude after estimation.
const COEF_CAP: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimKind {
    /// `M` assets, restricted VAR(1) estimation, quartic leverage rule.
    Multivariate,
    /// One asset, AR(1) estimation, leverage from the VaR constraint alone.
    Reduced1D,
    /// One return per decision, variance tracked by an EWMA of squared returns.
    Igarch,
}

impl SimKind {
    pub fn name(self) -> &'static str {
        match self {
            SimKind::Multivariate => "multivariate",
            SimKind::Reduced1D => "reduced",
            SimKind::Igarch => "igarch",
        }
    }
}

impl std::str::FromStr for SimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multivariate" | "full" => Ok(SimKind::Multivariate),
            "reduced" | "reduced1d" => Ok(SimKind::Reduced1D),
            "igarch" => Ok(SimKind::Igarch),
            other => Err(Error::InvalidArgument(format!("unknown simulation kind {other:?}"))),
        }
    }
}

/// What happens when a bank's equity is wiped out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsolvencyPolicy {
    /// Restore the initial equity and keep going.
    #[default]
    Recapitalize,
    /// Stop the run; the trajectory ends at the failing period.
    Halt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub periods: usize,
    pub seed: u64,
    pub insolvency: InsolvencyPolicy,
    /// Keep every return window. Memory grows as `T n M`.
    pub record_windows: bool,
    /// Starting leverage; drawn uniformly on `[1, gamma + 1)` when absent.
    pub initial_lambda: Option<f64>,
}

impl RunOptions {
    pub fn new(periods: usize, seed: u64) -> Self {
        RunOptions { periods, seed, insolvency: InsolvencyPolicy::default(), record_windows: false, initial_lambda: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: usize,
    pub state: SlowState,
    /// Absent for the single-time-scale run, which estimates nothing.
    pub estimate: Option<CovEstimate>,
    pub bank: BankState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "event")]
pub enum EventKind {
    /// Leverage left `[1, gamma + 1)` and was clamped back.
    DomainExit { lambda: f64 },
    Insolvency { equity: f64 },
    /// An estimated coefficient had modulus >= 1 and was pulled inside.
    CoefficientClamped { value: f64 },
    /// A negative systematic-variance expectation was set to 0.
    NegativeExpectation { sigma_u: f64 },
    /// Estimation or the portfolio choice failed; expectations were kept.
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub kind: SimKind,
    pub params: ModelParams,
    pub seed: u64,
    pub records: Vec<PeriodRecord>,
    pub events: Vec<Event>,
    pub windows: Option<Vec<ReturnWindow>>,
    /// True when an insolvency stopped the run early.
    pub halted: bool,
}

impl Trajectory {
    pub fn lambdas(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.state.lambda).collect()
    }

    pub fn domain_exits(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::DomainExit { .. })).count()
    }

    pub fn insolvencies(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Insolvency { .. })).count()
    }
}

/// Simulates `opts.periods` decision periods of the chosen system.
pub fn run_stochastic(kind: SimKind, p: &ModelParams, opts: &RunOptions) -> Result<Trajectory> {
    p.validate()?;
    if opts.periods < 1 {
        return Err(Error::InvalidArgument("need at least one period".into()));
    }
    let mut run = Run::new(kind, p, opts);
    match kind {
        SimKind::Multivariate => run.multivariate()?,
        SimKind::Reduced1D => run.reduced()?,
        SimKind::Igarch => run.igarch()?,
    }
    Ok(run.traj)
}

struct Run<'a> {
    p: &'a ModelParams,
    opts: &'a RunOptions,
    noise: NoiseSource,
    traj: Trajectory,
}

impl<'a> Run<'a> {
    fn new(kind: SimKind, p: &'a ModelParams, opts: &'a RunOptions) -> Self {
        Run {
            p,
            opts,
            noise: NoiseSource::new(opts.seed),
            traj: Trajectory {
                kind,
                params: p.clone(),
                seed: opts.seed,
                records: Vec::with_capacity(opts.periods),
                events: Vec::new(),
                windows: opts.record_windows.then(Vec::new),
                halted: false,
            },
        }
    }

    fn event(&mut self, t: usize, kind: EventKind) {
        self.traj.events.push(Event { t, kind });
    }

    fn n(&self) -> Result<usize> {
        match self.p.n.finite() {
            Some(n) if n >= 3 => Ok(n as usize),
            _ => Err(Error::InvalidParams("stochastic runs need a finite n >= 3".into())),
        }
    }

    fn initial_lambda(&self) -> f64 {
        self.opts.initial_lambda.unwrap_or_else(|| {
            // Stream u64::MAX is never used for returns.
            let mut rng = self.noise.period(u64::MAX);
            1.0 + self.p.gamma * rng.random::<f64>()
        })
    }

    fn fresh_bank(&self, lambda: f64) -> BankState {
        let equity = self.p.e0.unwrap_or(self.p.a0 / lambda);
        BankState::at_leverage(lambda * equity, lambda)
    }

    /// Clamps leverage into `[1, gamma + 1)`, recording the exit.
    fn clamp_lambda(&mut self, t: usize, lambda: f64) -> f64 {
        let top = self.p.leverage_ceiling() - 1e-9;
        if lambda >= 1.0 && lambda <= top {
            return lambda;
        }
        self.event(t, EventKind::DomainExit { lambda });
        if lambda.is_nan() {
            top
        } else {
            lambda.clamp(1.0, top)
        }
    }

    fn clamp_coef(&mut self, t: usize, c: f64) -> f64 {
        if c.abs() < COEF_CAP {
            return c;
        }
        self.event(t, EventKind::CoefficientClamped { value: c });
        c.clamp(-COEF_CAP, COEF_CAP)
    }

    /// Books one fast return; `Ok(false)` means the run must stop.
    fn book(&mut self, t: usize, bank: &mut BankState, lambda: f64, rp: f64) -> Result<bool> {
        match update_balance_sheet(bank, lambda, rp) {
            Ok(b) => {
                *bank = b;
                Ok(true)
            }
            Err(Error::InsolventBank { equity }) => {
                self.event(t, EventKind::Insolvency { equity });
                match self.opts.insolvency {
                    InsolvencyPolicy::Recapitalize => {
                        *bank = BankState { rp, ..self.fresh_bank(lambda) };
                        Ok(true)
                    }
                    InsolvencyPolicy::Halt => {
                        self.traj.halted = true;
                        Ok(false)
                    }
                }
            }
            Err(e) => Err(e),
        }
    }

    fn multivariate(&mut self) -> Result<()> {
        let p = self.p;
        let n = self.n()?;
        let dim = p.assets as usize;
        let lambda0 = self.initial_lambda();
        let (sd0, su0) = initial_expectations(p, lambda0);
        let mut state = match SlowState::from_expectations(sd0, su0, p) {
            Ok((s, _)) => s,
            Err(_) => SlowState { lambda: lambda0, sigma_d: sd0, sigma_u: su0, m: 1.0 },
        };
        state.lambda = self.clamp_lambda(0, state.lambda);
        let mut bank = self.fresh_bank(state.lambda);
        let mut carry = WindowCarry::cold(dim);
        let inv_m = 1.0 / dim as f64;

        for t in 0..self.opts.periods {
            let phi = build_phi(state.lambda, state.m, p);
            let mut rng = self.noise.period(t as u64);
            let mut stats = Var1Stats::new(dim);
            let mut ar = Ar1Stats::default();
            let mut prev = carry.last_return.clone();
            let mut window = self.opts.record_windows.then(|| (Vec::with_capacity(n * dim), prev.clone()));
            let mut rps = Vec::with_capacity(n);
            carry = simulate_stream(&phi, p, n, &carry, &mut rng, |step| {
                if dim > 1 {
                    stats.push(&prev, step.returns);
                } else {
                    ar.push(prev[0], step.returns[0]);
                }
                rps.push(step.returns.iter().sum::<f64>() * inv_m);
                prev.copy_from_slice(step.returns);
                if let Some((w, _)) = window.as_mut() {
                    w.extend_from_slice(step.returns);
                }
            });
            if let (Some(ws), Some((w, init))) = (self.traj.windows.as_mut(), window) {
                ws.push(ReturnWindow::from_returns(dim, init, w));
            }
            for &rp in &rps {
                if !self.book(t, &mut bank, state.lambda, rp)? {
                    return Ok(());
                }
            }

            let est = if dim > 1 { self.fit_var1(t, &stats, n) } else { self.fit_ar1(t, &ar, n) };
            let mut estimate = None;
            if let Some(est) = est {
                let sd = ewma_update(state.sigma_d, est.sigma_d_hat, p.omega);
                let mut su = ewma_update(state.sigma_u, est.sigma_u_hat, p.omega);
                if su < 0.0 {
                    self.event(t, EventKind::NegativeExpectation { sigma_u: su });
                    su = 0.0;
                }
                match SlowState::from_expectations(sd, su, p) {
                    Ok((next, _)) => {
                        state = next;
                        estimate = Some(est);
                    }
                    Err(e) => self.event(t, EventKind::Skipped { reason: e.to_string() }),
                }
            }
            let clamped = self.clamp_lambda(t, state.lambda);
            if clamped != state.lambda {
                state.lambda = clamped;
                state.m = crate::portfolio::optimal_diversification(clamped, state.sigma_d, state.sigma_u, p.alpha)
                    .unwrap_or(state.m);
            }
            bank = BankState { assets: state.lambda * bank.equity, liabilities: (state.lambda - 1.0) * bank.equity, ..bank };
            self.traj.records.push(PeriodRecord { t, state, estimate, bank });
        }
        Ok(())
    }

    fn fit_var1(&mut self, t: usize, stats: &Var1Stats, n: usize) -> Option<CovEstimate> {
        let mut fit = match stats.fit() {
            Ok(f) => f,
            Err(e) => {
                self.event(t, EventKind::Skipped { reason: e.to_string() });
                return None;
            }
        };
        fit.mu1 = self.clamp_coef(t, fit.mu1);
        fit.mu2 = self.clamp_coef(t, fit.mu2);
        match fit.aggregate(n as f64) {
            Ok(est) => Some(est),
            Err(e) => {
                self.event(t, EventKind::Skipped { reason: e.to_string() });
                None
            }
        }
    }

    fn fit_ar1(&mut self, t: usize, stats: &Ar1Stats, n: usize) -> Option<CovEstimate> {
        let (phi, sig2) = match stats.estimate() {
            Ok(v) => v,
            Err(e) => {
                self.event(t, EventKind::Skipped { reason: e.to_string() });
                return None;
            }
        };
        let phi = self.clamp_coef(t, phi);
        let v = aggregate_variance_ar1(phi, sig2, n as u32).ok()?;
        Some(CovEstimate {
            phi_hat: phi,
            beta_hat: 0.0,
            sig_eps_hat: sig2,
            sig_f_hat: 0.0,
            theta0_hat: sig2 / (1.0 - phi * phi),
            psi0_hat: 0.0,
            sigma_d_hat: v,
            sigma_u_hat: 0.0,
            truncation_warning: false,
        })
    }

    fn reduced(&mut self) -> Result<()> {
        let p = self.p;
        let n = self.n()?;
        let se = (p.sigma_eps / n as f64).sqrt();
        let a2 = p.alpha * p.alpha;
        let mut lambda = self.initial_lambda();
        lambda = self.clamp_lambda(0, lambda);
        let mut sigma = 1.0 / (a2 * lambda * lambda);
        let mut bank = self.fresh_bank(lambda);
        let (mut r_prev, mut e_prev) = (0.0f64, 0.0f64);

        for t in 0..self.opts.periods {
            let phi = (lambda - 1.0) / p.gamma;
            let mut rng = self.noise.period(t as u64);
            let mut stats = Ar1Stats::default();
            let mut window = self.opts.record_windows.then(|| (Vec::with_capacity(n), r_prev));
            let (mut equity, mut rp) = (bank.equity, 0.0);
            let mut failed = None;
            for _ in 0..n {
                let r = p.drift + se * std_normal(&mut rng) + e_prev;
                stats.push(r_prev, r);
                e_prev = phi * r;
                r_prev = r;
                // Rebalancing every step keeps A = lambda E, so equity compounds.
                let next = equity * (1.0 + lambda * r);
                if !(next > 0.0) && failed.is_none() {
                    failed = Some(next);
                }
                equity = if next > 0.0 { next } else { equity };
                rp = r;
                if let Some((w, _)) = window.as_mut() {
                    w.push(r);
                }
            }
            if let (Some(ws), Some((w, init))) = (self.traj.windows.as_mut(), window) {
                ws.push(ReturnWindow::from_returns(1, vec![init], w));
            }
            if let Some(eq) = failed {
                self.event(t, EventKind::Insolvency { equity: eq });
                match self.opts.insolvency {
                    InsolvencyPolicy::Recapitalize => equity = self.fresh_bank(lambda).equity,
                    InsolvencyPolicy::Halt => {
                        self.traj.halted = true;
                        return Ok(());
                    }
                }
            }

            let est = self.fit_ar1(t, &stats, n);
            if let Some(est) = &est {
                sigma = ewma_update(sigma, est.sigma_d_hat, p.omega);
                lambda = 1.0 / (p.alpha * sigma.sqrt());
            }
            let clamped = self.clamp_lambda(t, lambda);
            if clamped != lambda {
                lambda = clamped;
                sigma = 1.0 / (a2 * lambda * lambda);
            }
            bank = BankState { assets: lambda * equity, equity, liabilities: (lambda - 1.0) * equity, rp };
            let state = SlowState { lambda, sigma_d: sigma, sigma_u: 0.0, m: 1.0 };
            self.traj.records.push(PeriodRecord { t, state, estimate: est, bank });
        }
        Ok(())
    }

    fn igarch(&mut self) -> Result<()> {
        let p = self.p;
        let sd = p.sigma_eps.sqrt();
        let mut lambda = self.initial_lambda();
        lambda = self.clamp_lambda(0, lambda);
        let mut s = IgarchState { lambda, sigma2: 1.0 / (p.alpha * lambda).powi(2), r: 0.0, bank: self.fresh_bank(lambda) };
        for t in 0..self.opts.periods {
            let shock = sd * std_normal(&mut self.noise.period(t as u64));
            let (r, mut sigma2, mut lambda) = igarch_slow(&s, p, shock);
            let clamped = self.clamp_lambda(t, lambda);
            if clamped != lambda {
                lambda = clamped;
                sigma2 = 1.0 / (p.alpha * lambda).powi(2);
            }
            let mut bank = s.bank;
            if !self.book(t, &mut bank, lambda, r)? {
                return Ok(());
            }
            s = IgarchState { lambda, sigma2, r, bank };
            let state = SlowState { lambda, sigma_d: sigma2, sigma_u: 0.0, m: 1.0 };
            self.traj.records.push(PeriodRecord { t, state, estimate: None, bank });
        }
        Ok(())
    }
}

/// Expectations that produce leverage `lambda` under the quartic rule,
/// starting from `Sigma_d = Sigma_eps`.
fn initial_expectations(p: &ModelParams, lambda: f64) -> (f64, f64) {
    let k = p.nim / (2.0 * p.c);
    let a = 1.0 / (p.alpha * p.alpha);
    let b = (p.sigma_eps / k).sqrt() / p.alpha;
    let x = lambda.sqrt();
    let su = (a - b * x) / x.powi(4);
    if su > 0.0 {
        (p.sigma_eps, su)
    } else {
        (k / (p.alpha * p.alpha * lambda), 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub seed: u64,
    pub delta_lambda: f64,
    pub cv: f64,
    pub mean_lambda: f64,
    pub domain_exits: usize,
    pub insolvencies: usize,
    /// Set when the run failed; the statistics are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub kind: SimKind,
    pub params: ModelParams,
    pub periods: usize,
    pub transient: usize,
    pub per_seed: Vec<SeedStats>,
    pub mean_delta: f64,
    pub std_delta: f64,
    pub median_delta: f64,
    pub mean_cv: f64,
    pub std_cv: f64,
    pub median_cv: f64,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub periods: usize,
    /// Leading periods left out of the statistics; `T / 10` when absent.
    pub transient: Option<usize>,
    pub insolvency: InsolvencyPolicy,
}

impl EnsembleOptions {
    pub fn new(periods: usize) -> Self {
        EnsembleOptions { periods, transient: None, insolvency: InsolvencyPolicy::default() }
    }
}

/// Runs every seed (in parallel) and summarizes the leverage amplitude.
pub fn ensemble(kind: SimKind, p: &ModelParams, opts: &EnsembleOptions, seeds: &[u64]) -> Result<EnsembleSummary> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument("an ensemble needs at least 2 seeds".into()));
    }
    p.validate()?;
    let transient = opts.transient.unwrap_or(opts.periods / 10);
    if transient >= opts.periods {
        return Err(Error::InvalidArgument("transient must be shorter than the run".into()));
    }
    let per_seed: Vec<SeedStats> = seeds
        .par_iter()
        .map(|&seed| {
            let run = RunOptions { insolvency: opts.insolvency, ..RunOptions::new(opts.periods, seed) };
            match run_stochastic(kind, p, &run) {
                Ok(traj) => {
                    let path: Vec<f64> = traj.records.iter().skip(transient).map(|r| r.state.lambda).collect();
                    let (delta, cv) = amplitude_stats(&path);
                    let mean = path.iter().sum::<f64>() / path.len() as f64;
                    SeedStats {
                        seed,
                        delta_lambda: delta,
                        cv,
                        mean_lambda: mean,
                        domain_exits: traj.domain_exits(),
                        insolvencies: traj.insolvencies(),
                        error: None,
                    }
                }
                Err(e) => SeedStats {
                    seed,
                    delta_lambda: f64::NAN,
                    cv: f64::NAN,
                    mean_lambda: f64::NAN,
                    domain_exits: 0,
                    insolvencies: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let ok: Vec<&SeedStats> = per_seed.iter().filter(|s| s.error.is_none() && s.delta_lambda.is_finite()).collect();
    let (mean_delta, std_delta, median_delta) = moments(ok.iter().map(|s| s.delta_lambda).collect());
    let (mean_cv, std_cv, median_cv) = moments(ok.iter().map(|s| s.cv).collect());
    Ok(EnsembleSummary {
        kind,
        params: p.clone(),
        periods: opts.periods,
        transient,
        failed: per_seed.len() - ok.len(),
        per_seed,
        mean_delta,
        std_delta,
        median_delta,
        mean_cv,
        std_cv,
        median_cv,
    })
}

/// Mean, sample standard deviation and median. Values are sorted first so
/// the result does not depend on their order.
fn moments(mut v: Vec<f64>) -> (f64, f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 { (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let k = v.len();
    let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    (mean, sd, median)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::FastSteps;
    use crate::skeleton::{MapKind, SkeletonMap};

    fn reduced(omega: f64, n: u32) -> ModelParams {
        ModelParams { n: FastSteps::Finite(n), ..ModelParams::reduced(100.0, 1.64, 0.05, omega) }
    }

    #[test]
    fn record_count_and_balance_identity() {
        for kind in [SimKind::Reduced1D, SimKind::Igarch] {
            let t = run_stochastic(kind, &reduced(0.4, 200), &RunOptions::new(300, 5)).unwrap();
            assert_eq!(t.records.len(), 300);
            for r in &t.records {
                let b = r.bank;
                assert!((b.assets - b.equity - b.liabilities).abs() <= 1e-9 * b.assets.abs());
                assert!(b.equity > 0.0);
            }
        }
    }

    #[test]
    fn byte_identical_reruns() {
        let p = ModelParams { assets: 4, omega: 0.5, n: FastSteps::Finite(50), ..ModelParams::table1() };
        for kind in [SimKind::Multivariate, SimKind::Reduced1D, SimKind::Igarch] {
            let q = if kind == SimKind::Multivariate { p.clone() } else { reduced(0.4, 50) };
            let opts = RunOptions { record_windows: true, ..RunOptions::new(40, 17) };
            let a = serde_json::to_string(&run_stochastic(kind, &q, &opts).unwrap()).unwrap();
            let b = serde_json::to_string(&run_stochastic(kind, &q, &opts).unwrap()).unwrap();
            assert_eq!(a, b);
            let c = serde_json::to_string(&run_stochastic(kind, &q, &RunOptions { seed: 18, ..opts }).unwrap()).unwrap();
            assert_ne!(a, c);
        }
    }

    #[test]
    fn recorded_windows_reproduce_estimates() {
        let opts = RunOptions { record_windows: true, ..RunOptions::new(20, 3) };
        let t = run_stochastic(SimKind::Reduced1D, &reduced(0.4, 500), &opts).unwrap();
        let windows = t.windows.as_ref().unwrap();
        for (rec, w) in t.records.iter().zip(windows) {
            let (phi, sig2) = crate::estimation::estimate_ar1(&w.asset_path(0)).unwrap();
            let est = rec.estimate.unwrap();
            assert!((est.phi_hat - phi).abs() < 1e-12);
            assert!((est.sig_eps_hat - sig2).abs() < 1e-12 * sig2);
        }
        // Windows chain: each starts where the previous one ended.
        for pair in windows.windows(2) {
            assert_eq!(pair[1].initial()[0], *pair[0].returns.last().unwrap());
        }
    }

    #[test]
    fn reduced_converges_to_skeleton_with_n() {
        let fp = SkeletonMap::new(MapKind::Reduced1D, reduced(0.4, 100)).fixed_point().unwrap().lambda;
        let mut prev = f64::INFINITY;
        for &n in &[100u32, 1_000, 10_000] {
            let mut errs: Vec<f64> = (0..3u64)
                .map(|seed| {
                    let t = run_stochastic(SimKind::Reduced1D, &reduced(0.4, n), &RunOptions::new(200, seed)).unwrap();
                    let tail = &t.records[100..];
                    tail.iter().map(|r| (r.state.lambda - fp).abs()).sum::<f64>() / tail.len() as f64
                })
                .collect();
            errs.sort_by(f64::total_cmp);
            assert!(errs[1] < prev, "n={n}: {} vs {prev}", errs[1]);
            prev = errs[1];
        }
    }

    #[test]
    fn multivariate_tracks_skeleton() {
        let p = ModelParams { assets: 4, omega: 0.5, n: FastSteps::Finite(20_000), ..ModelParams::table1() };
        let sk = SkeletonMap::new(MapKind::Skeleton3D, ModelParams { n: FastSteps::Asymptotic, ..p.clone() });
        let fp = sk.fixed_point().unwrap();
        let t = run_stochastic(SimKind::Multivariate, &p, &RunOptions { initial_lambda: Some(fp.lambda), ..RunOptions::new(60, 9) })
            .unwrap();
        let tail: Vec<f64> = t.records[30..].iter().map(|r| r.state.lambda).collect();
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        assert!((mean / fp.lambda - 1.0).abs() < 0.05, "{mean} vs {}", fp.lambda);
        assert_eq!(t.domain_exits(), 0);
    }

    #[test]
    fn halt_policy_stops_run() {
        let p = ModelParams { n: FastSteps::Finite(1), ..ModelParams::reduced(40.0, 1.0, 0.05, 0.5) };
        let t = run_stochastic(SimKind::Igarch, &p, &RunOptions { insolvency: InsolvencyPolicy::Halt, ..RunOptions::new(5000, 1) })
            .unwrap();
        assert!(t.halted);
        assert_eq!(t.insolvencies(), 1);
        assert!(t.records.len() < 5000);
        let r = run_stochastic(SimKind::Igarch, &p, &RunOptions::new(5000, 1)).unwrap();
        assert_eq!(r.records.len(), 5000);
        assert!(r.insolvencies() >= 1);
    }

    #[test]
    fn domain_exit_is_clamped_and_logged() {
        // Tiny noise makes the VaR leverage far exceed gamma + 1.
        let p = ModelParams { n: FastSteps::Finite(100), ..ModelParams::reduced(10.0, 1.64, 1e-6, 0.2) };
        let t = run_stochastic(SimKind::Reduced1D, &p, &RunOptions::new(30, 2)).unwrap();
        assert!(t.domain_exits() > 0);
        assert!(t.records.iter().all(|r| r.state.lambda < p.leverage_ceiling()));
    }

    #[test]
    fn ensemble_is_order_independent() {
        let p = reduced(0.4, 200);
        let opts = EnsembleOptions::new(200);
        let a = ensemble(SimKind::Reduced1D, &p, &opts, &[1, 2, 3, 4]).unwrap();
        let b = ensemble(SimKind::Reduced1D, &p, &opts, &[4, 3, 2, 1]).unwrap();
        assert_eq!(a.mean_delta, b.mean_delta);
        assert_eq!(a.std_delta, b.std_delta);
        assert_eq!(a.per_seed.len(), 4);
        assert_eq!(a.per_seed[0].seed, 1);
        assert!(ensemble(SimKind::Reduced1D, &p, &opts, &[1]).is_err());
    }

    #[test]
    fn asymptotic_n_rejected() {
        let p = ModelParams::reduced(100.0, 1.64, 0.05, 0.4);
        assert!(matches!(run_stochastic(SimKind::Reduced1D, &p, &RunOptions::new(10, 0)), Err(Error::InvalidParams(_))));
    }
}
