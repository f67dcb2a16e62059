use levcycle::analysis::{
    bifurcation_sweep, find_omega2, find_omega_star, initial_state, iterate, lyapunov as lyap, lyapunov_logistic,
    omega_star_from_map_maximum, perturbation_envelope, threshold_sigma, Envelope, OmegaStar, StarOptions, SweepOptions,
};
use levcycle::montecarlo::{ensemble as run_ensemble, run_stochastic, EnsembleOptions, EventKind, InsolvencyPolicy, RunOptions, SimKind};
use levcycle::skeleton::{MapKind, SkeletonMap};
use levcycle::{ModelParams, SweepParam};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::{json, num, opt_num, Table};

fn map_kind(cfg: &RunConfig, default: MapKind) -> Result<MapKind, CliError> {
    cfg.kind.as_deref().map_or(Ok(default), |k| k.parse().map_err(CliError::from))
}

fn sim_kind(cfg: &RunConfig) -> Result<SimKind, CliError> {
    cfg.kind.as_deref().map_or(Ok(SimKind::Reduced1D), |k| k.parse().map_err(CliError::from))
}

fn sweep_param(name: Option<&str>, default: SweepParam) -> Result<SweepParam, CliError> {
    name.map_or(Ok(default), |s| s.parse().map_err(CliError::from))
}

/// `steps` evenly spaced points from `from` to `to`, both included.
fn grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>, CliError> {
    if steps == 0 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::Config("grid needs finite bounds and at least one point".into()));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps)
        .map(|i| {
            let s = i as f64 / (steps - 1) as f64;
            from * (1.0 - s) + to * s
        })
        .collect())
}

fn x_grid(cfg: &RunConfig, default: SweepParam) -> Result<(SweepParam, Vec<f64>), CliError> {
    let param = sweep_param(cfg.param.as_deref(), default)?;
    let g = grid(cfg.from.unwrap_or(0.01), cfg.to.unwrap_or(0.99), cfg.steps.unwrap_or(99))?;
    Ok((param, g))
}

fn sweep_options(cfg: &RunConfig) -> SweepOptions {
    let d = SweepOptions::default();
    SweepOptions { transient: cfg.transient.unwrap_or(d.transient), record: cfg.record.unwrap_or(d.record), ..d }
}

fn status<T>(r: &levcycle::Result<T>) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(e) => e.code(),
    }
}

#[derive(Serialize)]
struct FixedPointReport {
    kind: &'static str,
    lambda: f64,
    sigma_d: f64,
    sigma_u: f64,
    m: f64,
    /// `(re, im)` pairs sorted by modulus.
    eigenvalues: Vec<(f64, f64)>,
}

pub fn skeleton(cfg: &RunConfig, fixed_point: bool) -> Result<Vec<u8>, CliError> {
    let map = SkeletonMap::new(map_kind(cfg, MapKind::Skeleton3D)?, cfg.model()?);
    if fixed_point {
        let fp = map.fixed_point()?;
        let eig = map.jacobian(&fp)?;
        return json(&FixedPointReport {
            kind: map.kind.name(),
            lambda: fp.lambda,
            sigma_d: fp.sigma_d,
            sigma_u: fp.sigma_u,
            m: fp.m,
            eigenvalues: eig.iter().map(|z| (z.re, z.im)).collect(),
        });
    }
    let start = initial_state(&map)?;
    let transient = cfg.transient.unwrap_or(0);
    let orbit = iterate(&map, start, transient, cfg.record.unwrap_or(200));
    let mut t = Table::new(&["t", "lambda", "sigma_d", "sigma_u", "m", "domain_exit"])?;
    for (i, s) in orbit.samples.iter().enumerate() {
        t.row(&[(transient + i + 1).to_string(), num(s.lambda), num(s.sigma_d), num(s.sigma_u), num(s.m), "false".into()])?;
    }
    if let Some(e) = orbit.exit {
        t.row(&[e.iteration.to_string(), num(e.lambda), String::new(), String::new(), String::new(), "true".into()])?;
    }
    t.into_bytes()
}

pub fn map1d(cfg: &RunConfig, points: usize) -> Result<Vec<u8>, CliError> {
    let map = SkeletonMap::new(map_kind(cfg, MapKind::Reduced1D)?, cfg.model()?);
    if !map.kind.is_scalar() {
        return Err(CliError::Config("map1d needs a scalar map (reduced or igarch)".into()));
    }
    let top = map.params.leverage_ceiling();
    let mut t = Table::new(&["lambda", "next", "derivative"])?;
    for i in 0..points.max(1) {
        let l = 1.0 + (top - 1.0) * i as f64 / points.max(1) as f64;
        t.row(&[num(l), opt_num(map.map_1d(l).ok()), opt_num(map.map_1d_derivative(l).ok())])?;
    }
    t.into_bytes()
}

pub fn bifurcate(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let kind = map_kind(cfg, MapKind::Skeleton3D)?;
    let (param, g) = x_grid(cfg, SweepParam::Omega)?;
    let diagram = bifurcation_sweep(kind, param, &g, &cfg.model()?, &sweep_options(cfg))?;
    let mut t = Table::new(&[param.name(), "lambda_sample", "attractor_label", "domain_exit"])?;
    for pt in &diagram.points {
        let v = num(pt.value);
        let label = pt.label.to_string();
        for &l in &pt.lambda {
            t.row(&[v.clone(), num(l), label.clone(), "false".into()])?;
        }
        if let Some(e) = pt.exit {
            t.row(&[v.clone(), num(e.lambda), label.clone(), "true".into()])?;
        }
    }
    t.into_bytes()
}

#[derive(Serialize)]
struct LogisticCheck {
    map: &'static str,
    r: f64,
    iterations: usize,
    lyapunov: f64,
    expected: f64,
    pass: bool,
}

#[derive(Serialize)]
struct LyapunovReport {
    kind: &'static str,
    status: &'static str,
    lyapunov: Option<f64>,
}

pub fn lyapunov(cfg: &RunConfig, validate_logistic: bool) -> Result<Vec<u8>, CliError> {
    if validate_logistic {
        let iterations = cfg.iterations.unwrap_or(1_000_000);
        let l = lyapunov_logistic(4.0, 0.3, iterations);
        let expected = std::f64::consts::LN_2;
        return json(&LogisticCheck { map: "logistic", r: 4.0, iterations, lyapunov: l, expected, pass: (l - expected).abs() < 0.01 });
    }
    let kind = map_kind(cfg, MapKind::Skeleton3D)?;
    let p = cfg.model()?;
    let iterations = cfg.iterations.unwrap_or(5000);
    if cfg.param.is_none() {
        let r = lyap(&SkeletonMap::new(kind, p), iterations);
        return json(&LyapunovReport { kind: kind.name(), status: status(&r), lyapunov: r.ok() });
    }
    let (param, g) = x_grid(cfg, SweepParam::Omega)?;
    let params: Vec<ModelParams> = g.iter().map(|&v| p.with(param, v)).collect::<levcycle::Result<_>>()?;
    let results: Vec<levcycle::Result<f64>> = params.into_par_iter().map(|q| lyap(&SkeletonMap::new(kind, q), iterations)).collect();
    let mut t = Table::new(&[param.name(), "lyapunov", "status"])?;
    for (v, r) in g.iter().zip(&results) {
        t.row(&[num(*v), opt_num(r.as_ref().ok().copied()), status(r).to_string()])?;
    }
    t.into_bytes()
}

#[derive(Serialize)]
struct BoundaryReport {
    kind: &'static str,
    omega2: Option<f64>,
    omega2_status: &'static str,
    omega_star: OmegaStar,
    omega_star_map_max: Option<OmegaStar>,
    threshold_sigma: Option<f64>,
}

fn star_options(cfg: &RunConfig) -> StarOptions {
    let d = StarOptions::default();
    StarOptions { transient: cfg.transient.unwrap_or(d.transient), record: cfg.record.unwrap_or(d.record), ..d }
}

pub fn boundaries(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let kind = map_kind(cfg, MapKind::Skeleton3D)?;
    let map = SkeletonMap::new(kind, cfg.model()?);
    let w2 = find_omega2(&map);
    let by_max = if kind.is_scalar() { Some(omega_star_from_map_maximum(&map)?) } else { None };
    let threshold = if kind == MapKind::Reduced1D {
        // Log-spaced volatilities from 1e-5 to 1.
        let vols: Vec<f64> = (0..=250).map(|i| 10f64.powf(-5.0 + 5.0 * i as f64 / 250.0)).collect();
        threshold_sigma(&map, &vols)?
    } else {
        None
    };
    json(&BoundaryReport {
        kind: kind.name(),
        omega2: w2.as_ref().ok().copied(),
        omega2_status: status(&w2),
        omega_star: find_omega_star(&map, &star_options(cfg)),
        omega_star_map_max: by_max,
        threshold_sigma: threshold,
    })
}

pub fn contour(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let kind = map_kind(cfg, MapKind::Reduced1D)?;
    let (xp, xs) = x_grid(cfg, SweepParam::Gamma)?;
    let yp = sweep_param(cfg.y_param.as_deref(), SweepParam::Alpha)?;
    let ys = grid(cfg.y_from.unwrap_or(1.0), cfg.y_to.unwrap_or(3.0), cfg.y_steps.unwrap_or(21))?;
    let p = cfg.model()?;
    let opts = star_options(cfg);
    let mut cells = Vec::with_capacity(xs.len() * ys.len());
    for &x in &xs {
        for &y in &ys {
            cells.push((x, y, p.with(xp, x)?.with(yp, y)?));
        }
    }
    let results: Vec<(levcycle::Result<f64>, OmegaStar)> = cells
        .par_iter()
        .map(|(_, _, q)| {
            let map = SkeletonMap::new(kind, q.clone());
            (find_omega2(&map), find_omega_star(&map, &opts))
        })
        .collect();
    let mut t = Table::new(&[xp.name(), yp.name(), "omega2", "omega2_status", "omega_star", "omega_star_status"])?;
    for ((x, y, _), (w2, star)) in cells.iter().zip(&results) {
        let star_status = match star {
            OmegaStar::Value(_) => "value",
            OmegaStar::AlwaysStationary => "always_stationary",
            OmegaStar::NeverStationary => "never_stationary",
        };
        t.row(&[num(*x), num(*y), opt_num(w2.as_ref().ok().copied()), status(w2).into(), opt_num(star.value()), star_status.into()])?;
    }
    t.into_bytes()
}

pub fn perturb(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let kind = map_kind(cfg, MapKind::Reduced1D)?;
    let p = cfg.model()?;
    let ns = cfg.n_values.clone().unwrap_or_else(|| vec![100, 1_000, 10_000, 100_000]);
    let results: Vec<levcycle::Result<Envelope>> = ns.par_iter().map(|&n| perturbation_envelope(kind, &p, n)).collect();
    let mut t = Table::new(&["n", "status", "delta_lambda", "cycle_amplitude", "lyapunov"])?;
    for (n, r) in ns.iter().zip(&results) {
        let row = match r {
            Ok(Envelope::Applicable(e)) => ["applicable".to_string(), num(e.delta_lambda), num(e.cycle_amplitude), num(e.lyapunov)],
            Ok(Envelope::NotApplicable { lyapunov }) => ["not_applicable".into(), String::new(), String::new(), num(*lyapunov)],
            Err(e) => [e.code().to_string(), String::new(), String::new(), String::new()],
        };
        t.row(&[n.to_string(), row[0].clone(), row[1].clone(), row[2].clone(), row[3].clone()])?;
    }
    t.into_bytes()
}

fn insolvency(cfg: &RunConfig) -> Result<InsolvencyPolicy, CliError> {
    match cfg.insolvency.as_deref() {
        None | Some("recapitalize") => Ok(InsolvencyPolicy::Recapitalize),
        Some("halt") => Ok(InsolvencyPolicy::Halt),
        Some(other) => Err(CliError::Config(format!("insolvency must be recapitalize or halt, got {other:?}"))),
    }
}

fn event_name(k: &EventKind) -> &'static str {
    match k {
        EventKind::DomainExit { .. } => "domain_exit",
        EventKind::Insolvency { .. } => "insolvency",
        EventKind::CoefficientClamped { .. } => "coefficient_clamped",
        EventKind::NegativeExpectation { .. } => "negative_expectation",
        EventKind::Skipped { .. } => "skipped",
    }
}

pub fn simulate(cfg: &RunConfig, format: &str) -> Result<Vec<u8>, CliError> {
    let kind = sim_kind(cfg)?;
    let opts = RunOptions { insolvency: insolvency(cfg)?, ..RunOptions::new(cfg.periods.unwrap_or(1000), cfg.seed) };
    let traj = run_stochastic(kind, &cfg.model()?, &opts)?;
    match format {
        "json" => json(&traj),
        "csv" => {
            let mut t = Table::new(&[
                "t", "lambda", "sigma_d", "sigma_u", "m", "assets", "equity", "liabilities", "phi_hat", "beta_hat", "sigma_d_hat",
                "sigma_u_hat", "events",
            ])?;
            for r in &traj.records {
                let events: Vec<&str> = traj.events.iter().filter(|e| e.t == r.t).map(|e| event_name(&e.kind)).collect();
                let est = r.estimate;
                t.row(&[
                    r.t.to_string(),
                    num(r.state.lambda),
                    num(r.state.sigma_d),
                    num(r.state.sigma_u),
                    num(r.state.m),
                    num(r.bank.assets),
                    num(r.bank.equity),
                    num(r.bank.liabilities),
                    opt_num(est.map(|e| e.phi_hat)),
                    opt_num(est.map(|e| e.beta_hat)),
                    opt_num(est.map(|e| e.sigma_d_hat)),
                    opt_num(est.map(|e| e.sigma_u_hat)),
                    events.join(";"),
                ])?;
            }
            t.into_bytes()
        }
        other => Err(CliError::Config(format!("format must be csv or json, got {other:?}"))),
    }
}

pub fn ensemble(cfg: &RunConfig) -> Result<Vec<u8>, CliError> {
    let kind = sim_kind(cfg)?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|i| cfg.seed + i).collect();
    let opts = EnsembleOptions { transient: cfg.transient, insolvency: insolvency(cfg)?, ..EnsembleOptions::new(cfg.periods.unwrap_or(1000)) };
    json(&run_ensemble(kind, &cfg.model()?, &opts, &seeds)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_endpoints() {
        let g = grid(0.01, 0.99, 99).unwrap();
        assert_eq!(g.len(), 99);
        assert_eq!(g[0], 0.01);
        assert_eq!(g[98], 0.99);
        assert_eq!(grid(0.5, 0.7, 1).unwrap(), vec![0.5]);
        assert!(grid(0.0, 1.0, 0).is_err());
    }
}
