//! Fast-scale returns, rebalancing demand, price impact and balance sheets.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Var1Stats;
use crate::params::ModelParams;
use crate::phi::{build_phi, PhiMatrix};
use crate::portfolio::SlowState;

/// Seeded Gaussian noise. Each decision period `t` gets its own ChaCha
/// stream, so draws are a function of `(seed, t, k, i)` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NoiseSource {
    pub seed: u64,
}

impl NoiseSource {
    pub fn new(seed: u64) -> Self {
        NoiseSource { seed }
    }

    pub fn period(&self, t: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(t);
        rng
    }
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// State carried from one window to the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCarry {
    /// Last return of the previous window (the first lag of the next one).
    pub last_return: Vec<f64>,
    /// Last endogenous component, which enters the next window's first return.
    pub last_endo: Vec<f64>,
}

impl WindowCarry {
    pub fn cold(dim: usize) -> Self {
        WindowCarry { last_return: vec![0.0; dim], last_endo: vec![0.0; dim] }
    }
}

/// The `n` fast returns of one decision period, row-major `n x M`.
///
/// `endo`, `exo` and `factor` are empty when the window was built from
/// returns alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnWindow {
    dim: usize,
    initial: Vec<f64>,
    pub returns: Vec<f64>,
    pub endo: Vec<f64>,
    pub exo: Vec<f64>,
    pub factor: Vec<f64>,
}

impl ReturnWindow {
    /// Window from observed returns; `initial` is the return preceding the first row.
    pub fn from_returns(dim: usize, initial: Vec<f64>, returns: Vec<f64>) -> Self {
        assert_eq!(initial.len(), dim, "initial return has wrong dimension");
        assert_eq!(returns.len() % dim, 0, "returns are not a whole number of rows");
        ReturnWindow { dim, initial, returns, endo: Vec::new(), exo: Vec::new(), factor: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.returns.len() / self.dim
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.returns[k * self.dim..(k + 1) * self.dim]
    }

    /// Scalar path of asset `i`, start value first.
    pub fn asset_path(&self, i: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.steps() + 1);
        out.push(self.initial[i]);
        out.extend((0..self.steps()).map(|k| self.returns[k * self.dim + i]));
        out
    }

    /// Sum of each asset's returns over the window.
    pub fn aggregated(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for row in self.returns.chunks_exact(self.dim) {
            for (o, r) in out.iter_mut().zip(row) {
                *o += r;
            }
        }
        out
    }

    pub fn var1_stats(&self) -> Var1Stats {
        let mut s = Var1Stats::new(self.dim);
        let mut prev = self.initial.as_slice();
        for row in self.returns.chunks_exact(self.dim) {
            s.push(prev, row);
            prev = row;
        }
        s
    }

    pub fn carry(&self) -> WindowCarry {
        let n = self.steps();
        let last = |v: &Vec<f64>| if v.is_empty() || n == 0 { vec![0.0; self.dim] } else { v[(n - 1) * self.dim..].to_vec() };
        WindowCarry {
            last_return: if n == 0 { self.initial.clone() } else { last(&self.returns) },
            last_endo: last(&self.endo),
        }
    }
}

/// Runs `n` fast steps of `r_k = eps_k + f_k 1 + e_{k-1}`, `e_k = Phi r_k`,
/// with `Phi` generated by the slow state.
///
/// Noise variances per step are `Sigma_eps / n` and `Sigma_f / n`; `drift`
/// shifts the idiosyncratic noise mean.
pub fn simulate_window<R: Rng + ?Sized>(
    state: &SlowState,
    p: &ModelParams,
    n: usize,
    carry: &WindowCarry,
    rng: &mut R,
) -> ReturnWindow {
    let phi = build_phi(state.lambda, state.m, p);
    simulate_with_phi(&phi, p, n, carry, rng)
}

pub fn simulate_with_phi<R: Rng + ?Sized>(
    phi: &PhiMatrix,
    p: &ModelParams,
    n: usize,
    carry: &WindowCarry,
    rng: &mut R,
) -> ReturnWindow {
    let dim = phi.dim;
    let mut returns = Vec::with_capacity(n * dim);
    let mut endo = Vec::with_capacity(n * dim);
    let mut exo = Vec::with_capacity(n * dim);
    let mut factor = Vec::with_capacity(n);
    simulate_stream(phi, p, n, carry, rng, |step| {
        returns.extend_from_slice(step.returns);
        endo.extend_from_slice(step.endo);
        exo.extend_from_slice(step.exo);
        factor.push(step.factor);
    });
    ReturnWindow { dim, initial: carry.last_return.clone(), returns, endo, exo, factor }
}

/// One fast step as seen by a [`simulate_stream`] consumer.
pub struct FastStep<'a> {
    pub returns: &'a [f64],
    pub endo: &'a [f64],
    pub exo: &'a [f64],
    pub factor: f64,
}

/// Same dynamics as [`simulate_with_phi`] without storing the window. Draw
/// order per step is the factor, then the `M` idiosyncratic terms. Returns
/// the carry for the next window.
pub fn simulate_stream<R: Rng + ?Sized, F: FnMut(FastStep<'_>)>(
    phi: &PhiMatrix,
    p: &ModelParams,
    n: usize,
    carry: &WindowCarry,
    rng: &mut R,
    mut sink: F,
) -> WindowCarry {
    let dim = phi.dim;
    let se = (p.sigma_eps / n as f64).sqrt();
    let sf = (p.sigma_f / n as f64).sqrt();
    let mut r = carry.last_return.clone();
    let mut e = carry.last_endo.clone();
    let mut x = vec![0.0; dim];
    for _ in 0..n {
        let f = sf * std_normal(rng);
        for i in 0..dim {
            x[i] = p.drift + se * std_normal(rng);
            r[i] = x[i] + f + e[i];
        }
        phi.apply(&r, &mut e);
        sink(FastStep { returns: &r, endo: &e, exo: &x, factor: f });
    }
    WindowCarry { last_return: r, last_endo: e }
}

/// Balance sheet of a representative bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BankState {
    pub assets: f64,
    pub equity: f64,
    pub liabilities: f64,
    /// Holding-period return of the last update.
    pub rp: f64,
}

impl BankState {
    pub fn at_leverage(assets: f64, lambda: f64) -> Self {
        let equity = assets / lambda;
        BankState { assets, equity, liabilities: assets - equity, rp: 0.0 }
    }

    pub fn leverage(&self) -> f64 {
        self.assets / self.equity
    }
}

/// Purchases needed to restore target leverage after a portfolio return
/// `rp`: `(lambda - 1) A* rp` where `A*` is the pre-return asset size.
pub fn rebalance_demand(bank: &BankState, lambda_target: f64, rp: f64) -> f64 {
    (lambda_target - 1.0) * bank.assets * rp
}

/// Books the return on equity and resizes assets to the target leverage.
pub fn update_balance_sheet(bank: &BankState, lambda_target: f64, rp: f64) -> Result<BankState> {
    let equity = bank.equity + rp * bank.assets;
    if !(equity > 0.0) {
        return Err(Error::InsolventBank { equity });
    }
    let assets = lambda_target * equity;
    Ok(BankState { assets, equity, liabilities: assets - equity, rp })
}

/// Mean-field aggregate demand for each asset when `banks` identical banks
/// hold `m` of the `M` assets in equal weights.
///
/// A bank holding asset `i` sees the expected portfolio return
/// `(r_i + (m-1)/(M-1) sum_{j != i} r_j) / m`, and `N m / M` banks hold `i`
/// on average; each spreads its demand over `m` assets.
pub fn aggregate_demand(lambda: f64, a_star: f64, m: f64, banks: u32, returns: &[f64]) -> Vec<f64> {
    let dim = returns.len();
    let mf = dim as f64;
    let total: f64 = returns.iter().sum();
    let holders = banks as f64 * m / mf;
    let share = if dim > 1 { (m - 1.0) / (mf - 1.0) } else { 0.0 };
    returns
        .iter()
        .map(|&ri| {
            let rp = (ri + share * (total - ri)) / m;
            let bank = BankState { assets: a_star, equity: a_star / lambda, liabilities: 0.0, rp: 0.0 };
            holders * rebalance_demand(&bank, lambda, rp) / m
        })
        .collect()
}

/// Market capitalization proxy per asset, `N A* / M`.
pub fn capitalization(banks: u32, a_star: f64, assets: u32) -> f64 {
    banks as f64 * a_star / assets as f64
}

/// Linear price impact of demand on an asset of capitalization `cap`.
pub fn price_impact(demand: f64, gamma: f64, cap: f64) -> f64 {
    demand / (gamma * cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(lambda: f64, m: f64) -> SlowState {
        SlowState { lambda, sigma_d: 1e-3, sigma_u: 1e-5, m }
    }

    #[test]
    fn unit_leverage_returns_are_noise() {
        let p = ModelParams { assets: 4, ..ModelParams::table1() };
        let mut rng = NoiseSource::new(7).period(0);
        let w = simulate_window(&state(1.0, 2.0), &p, 50, &WindowCarry::cold(4), &mut rng);
        for k in 0..50 {
            for i in 0..4 {
                let idx = k * 4 + i;
                assert_eq!(w.returns[idx], w.exo[idx] + w.factor[k]);
                assert_eq!(w.endo[idx], 0.0);
            }
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let p = ModelParams { assets: 3, ..ModelParams::table1() };
        let s = state(30.0, 2.0);
        let a = simulate_window(&s, &p, 100, &WindowCarry::cold(3), &mut NoiseSource::new(11).period(5));
        let b = simulate_window(&s, &p, 100, &WindowCarry::cold(3), &mut NoiseSource::new(11).period(5));
        assert_eq!(a, b);
        let c = simulate_window(&s, &p, 100, &WindowCarry::cold(3), &mut NoiseSource::new(11).period(6));
        assert_ne!(a.returns, c.returns);
    }

    #[test]
    fn window_satisfies_recursion() {
        let p = ModelParams { assets: 3, ..ModelParams::table1() };
        let s = state(40.0, 1.7);
        let phi = build_phi(s.lambda, s.m, &p);
        let carry = WindowCarry { last_return: vec![0.01, -0.02, 0.0], last_endo: vec![0.001, 0.002, -0.001] };
        let w = simulate_window(&s, &p, 20, &carry, &mut NoiseSource::new(3).period(0));
        let mut e_prev = carry.last_endo.clone();
        for k in 0..20 {
            let row = w.row(k);
            let mut e = vec![0.0; 3];
            phi.apply(row, &mut e);
            for i in 0..3 {
                assert!((row[i] - (w.exo[k * 3 + i] + w.factor[k] + e_prev[i])).abs() < 1e-15);
                assert!((w.endo[k * 3 + i] - e[i]).abs() < 1e-15);
            }
            e_prev = e;
        }
        assert_eq!(w.carry().last_endo, e_prev);
    }

    #[test]
    fn demand_and_balance_sheet_arithmetic() {
        let bank = BankState { assets: 100.0, equity: 50.0, liabilities: 50.0, rp: 0.0 };
        assert_eq!(rebalance_demand(&bank, 1.0, 0.3), 0.0);
        assert!((rebalance_demand(&bank, 2.0, 0.01) - 1.0).abs() < 1e-12);
        let next = update_balance_sheet(&bank, 2.0, 0.01).unwrap();
        assert!((next.equity - 51.0).abs() < 1e-12);
        assert!((next.assets - 102.0).abs() < 1e-12);
        assert!((next.liabilities - 51.0).abs() < 1e-12);
        let still = update_balance_sheet(&bank, 3.0, 0.0).unwrap();
        assert_eq!(still.equity, 50.0);
        assert_eq!(still.assets, 150.0);
        assert!(matches!(update_balance_sheet(&bank, 2.0, -0.6), Err(Error::InsolventBank { .. })));
    }

    #[test]
    fn demand_impact_reproduces_phi() {
        let p = ModelParams { assets: 7, banks: 13, ..ModelParams::table1() };
        let mut rng = NoiseSource::new(99).period(0);
        for _ in 0..50 {
            let lambda = 1.0 + 90.0 * rng.random::<f64>();
            let m = 0.5 + 6.5 * rng.random::<f64>();
            let a_star = 10.0 + 200.0 * rng.random::<f64>();
            let r: Vec<f64> = (0..7).map(|_| std_normal(&mut rng) * 0.01).collect();
            let cap = capitalization(p.banks, a_star, p.assets);
            let e: Vec<f64> = aggregate_demand(lambda, a_star, m, p.banks, &r)
                .into_iter()
                .map(|d| price_impact(d, p.gamma, cap))
                .collect();
            let mut expected = vec![0.0; 7];
            build_phi(lambda, m, &p).apply(&r, &mut expected);
            for i in 0..7 {
                assert!((e[i] - expected[i]).abs() <= 1e-14 * expected[i].abs().max(1e-3));
            }
        }
    }
}
