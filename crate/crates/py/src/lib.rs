//! Python bindings. Parameters are passed as keyword arguments on top of the
//! reference set (or the one-asset reduced set); structured results come
//! back as plain dicts.

use levcycle::analysis::{find_omega2, find_omega_star, iterate, initial_state, lyapunov as lyap, lyapunov_logistic, perturbation_envelope, StarOptions};
use levcycle::montecarlo::{ensemble as run_ensemble, run_stochastic, EnsembleOptions, InsolvencyPolicy, RunOptions, SimKind};
use levcycle::skeleton::{MapKind, SkeletonMap};
use levcycle::{FastSteps, ModelParams};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn err(e: levcycle::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.code()))
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// `sigma_eps` is the idiosyncratic volatility; `sigma_f_ratio` scales the
/// factor volatility relative to it.
fn params(reduced: bool, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<ModelParams> {
    let mut p = if reduced { ModelParams::reduced(100.0, 1.64, 0.03f64.powi(2), 0.4) } else { ModelParams::table1() };
    let mut ratio = if reduced { 0.0 } else { 0.1 };
    if let Some(kw) = kwargs {
        for (k, v) in kw.iter() {
            let key: String = k.extract()?;
            match key.as_str() {
                "M" => p.assets = v.extract()?,
                "N" => p.banks = v.extract()?,
                "nim" => p.nim = v.extract()?,
                "gamma" => p.gamma = v.extract()?,
                "sigma_eps" => p.sigma_eps = v.extract::<f64>()?.powi(2),
                "sigma_f_ratio" => ratio = v.extract()?,
                "c" => p.c = v.extract()?,
                "alpha" => p.alpha = v.extract()?,
                "omega" => p.omega = v.extract()?,
                "A0" => p.a0 = v.extract()?,
                "E0" => p.e0 = Some(v.extract()?),
                "drift" => p.drift = v.extract()?,
                "n" => {
                    p.n = match v.extract::<u32>() {
                        Ok(n) => FastSteps::Finite(n),
                        Err(_) => v.extract::<String>()?.parse().map_err(err)?,
                    }
                }
                other => return Err(PyValueError::new_err(format!("unknown parameter {other:?}"))),
            }
        }
    }
    p.sigma_f = ratio * ratio * p.sigma_eps;
    p.validate().map_err(err)?;
    Ok(p)
}

fn map_for(kind: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<SkeletonMap> {
    let kind: MapKind = kind.parse().map_err(err)?;
    Ok(SkeletonMap::new(kind, params(kind.is_scalar(), kwargs)?))
}

/// Optimal leverage for expected variances `(sigma_d, sigma_u)`.
#[pyfunction]
#[pyo3(signature = (sigma_d, sigma_u, **kwargs))]
fn solve_leverage(sigma_d: f64, sigma_u: f64, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    levcycle::solve_leverage(sigma_d, sigma_u, &params(false, kwargs)?).map_err(err)
}

/// Fixed point as a dict with lambda, sigma_d, sigma_u, m and eigenvalue moduli.
#[pyfunction]
#[pyo3(signature = (kind = "skeleton3d", **kwargs))]
fn fixed_point(py: Python<'_>, kind: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let map = map_for(kind, kwargs)?;
    let fp = map.fixed_point().map_err(err)?;
    let moduli: Vec<f64> = map.jacobian(&fp).map_err(err)?.iter().map(|z| z.norm()).collect();
    let d = PyDict::new(py);
    d.set_item("lambda", fp.lambda)?;
    d.set_item("sigma_d", fp.sigma_d)?;
    d.set_item("sigma_u", fp.sigma_u)?;
    d.set_item("m", fp.m)?;
    d.set_item("eigenvalue_moduli", moduli)?;
    Ok(d.into_any().unbind())
}

/// One step of a scalar map.
#[pyfunction]
#[pyo3(signature = (lam, kind = "reduced1d", **kwargs))]
fn map_1d(lam: f64, kind: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    map_for(kind, kwargs)?.map_1d(lam).map_err(err)
}

/// Leverage path after a transient, from the default initial state.
#[pyfunction]
#[pyo3(signature = (kind = "skeleton3d", transient = 1000, record = 200, **kwargs))]
fn orbit(kind: &str, transient: usize, record: usize, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Vec<f64>> {
    let map = map_for(kind, kwargs)?;
    let start = initial_state(&map).map_err(err)?;
    Ok(iterate(&map, start, transient, record).samples.iter().map(|s| s.lambda).collect())
}

#[pyfunction]
#[pyo3(signature = (kind = "skeleton3d", iterations = 10000, **kwargs))]
fn lyapunov(kind: &str, iterations: usize, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<f64> {
    lyap(&map_for(kind, kwargs)?, iterations).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (r = 4.0, x0 = 0.3, iterations = 1_000_000))]
fn logistic_lyapunov(r: f64, x0: f64, iterations: usize) -> f64 {
    lyapunov_logistic(r, x0, iterations)
}

/// `(omega2, omega_star)`; either is None when it does not exist.
#[pyfunction]
#[pyo3(signature = (kind = "skeleton3d", **kwargs))]
fn boundaries(kind: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<(Option<f64>, Option<f64>)> {
    let map = map_for(kind, kwargs)?;
    Ok((find_omega2(&map).ok(), find_omega_star(&map, &StarOptions::default()).value()))
}

#[pyfunction]
#[pyo3(signature = (n, kind = "reduced1d", **kwargs))]
fn envelope(py: Python<'_>, n: u32, kind: &str, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let kind: MapKind = kind.parse().map_err(err)?;
    let report = perturbation_envelope(kind, &params(kind.is_scalar(), kwargs)?, n).map_err(err)?;
    to_py(py, &report)
}

fn sim_kind(kind: &str) -> PyResult<SimKind> {
    kind.parse().map_err(err)
}

/// One stochastic run; the trajectory comes back as a dict.
#[pyfunction]
#[pyo3(signature = (kind = "reduced", periods = 200, seed = 0, halt_on_insolvency = false, **kwargs))]
fn simulate(py: Python<'_>, kind: &str, periods: usize, seed: u64, halt_on_insolvency: bool, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let kind = sim_kind(kind)?;
    let p = params(kind != SimKind::Multivariate, kwargs)?;
    let mut opts = RunOptions::new(periods, seed);
    if halt_on_insolvency {
        opts.insolvency = InsolvencyPolicy::Halt;
    }
    let traj = py.detach(|| run_stochastic(kind, &p, &opts)).map_err(err)?;
    to_py(py, &traj)
}

/// Amplitude statistics over seeds `seed..seed+count`.
#[pyfunction]
#[pyo3(signature = (kind = "reduced", periods = 2000, seed = 0, count = 50, **kwargs))]
fn ensemble(py: Python<'_>, kind: &str, periods: usize, seed: u64, count: u64, kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Py<PyAny>> {
    let kind = sim_kind(kind)?;
    let p = params(kind != SimKind::Multivariate, kwargs)?;
    let seeds: Vec<u64> = (seed..seed + count).collect();
    let summary = py.detach(|| run_ensemble(kind, &p, &EnsembleOptions::new(periods), &seeds)).map_err(err)?;
    to_py(py, &summary)
}

#[pymodule]
fn levcycle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve_leverage, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(map_1d, m)?)?;
    m.add_function(wrap_pyfunction!(orbit, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(logistic_lyapunov, m)?)?;
    m.add_function(wrap_pyfunction!(boundaries, m)?)?;
    m.add_function(wrap_pyfunction!(envelope, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble, m)?)?;
    Ok(())
}
