use nalgebra::Vector3;

use super::orbit::initial_state;
use crate::error::{Error, Result};
use crate::skeleton::SkeletonMap;

const TRANSIENT: usize = 1000;

/// Largest Lyapunov exponent along the attractor reached from the perturbed
/// fixed point.
///
/// Scalar maps average `ln |f'|`. The 3D map follows a tangent vector in
/// log coordinates, advanced by central differences and renormalized each
/// step.
pub fn lyapunov(map: &SkeletonMap, iterations: usize) -> Result<f64> {
    let start = initial_state(map)?;
    let mut s = start;
    let exit = |t: usize, l: f64| Error::DomainExit { iteration: t, value: l };
    for t in 0..TRANSIENT {
        let step = map.step(&s).map_err(|_| exit(t + 1, s.lambda))?;
        if step.flags.leverage {
            return Err(exit(t + 1, step.state.lambda));
        }
        s = step.state;
    }
    if map.kind.is_scalar() {
        let mut acc = 0.0;
        for t in 0..iterations {
            acc += map.map_1d_derivative(s.lambda)?.abs().ln();
            let step = map.step(&s).map_err(|_| exit(TRANSIENT + t + 1, s.lambda))?;
            if step.flags.leverage {
                return Err(exit(TRANSIENT + t + 1, step.state.lambda));
            }
            s = step.state;
        }
        return Ok(acc / iterations as f64);
    }

    let h = 1e-7;
    let mut v = Vector3::new(1.0, 1.0, 1.0).normalize();
    let mut acc = 0.0;
    for t in 0..iterations {
        let x = SkeletonMap::to_vec3(&s);
        let shift = |sign: f64| Vector3::from_fn(|i, _| x[i] * (sign * h * v[i]).exp());
        let up = map.step_vec3(&shift(1.0))?;
        let down = map.step_vec3(&shift(-1.0))?;
        let step = map.step(&s).map_err(|_| exit(TRANSIENT + t + 1, s.lambda))?;
        if step.flags.leverage {
            return Err(exit(TRANSIENT + t + 1, step.state.lambda));
        }
        let w = Vector3::from_fn(|i, _| (up[i].ln() - down[i].ln()) / (2.0 * h));
        let norm = w.norm();
        if norm == 0.0 {
            // The tangent vector fell into the null direction; restart it.
            v = Vector3::new(1.0, 1.0, 1.0).normalize();
            acc += f64::MIN_POSITIVE.ln();
        } else {
            acc += norm.ln();
            v = w / norm;
        }
        s = step.state;
    }
    Ok(acc / iterations as f64)
}

/// Lyapunov exponent of the logistic map `x -> r x (1 - x)`.
pub fn lyapunov_logistic(r: f64, x0: f64, iterations: usize) -> f64 {
    let mut x = x0;
    for _ in 0..TRANSIENT {
        x = r * x * (1.0 - x);
    }
    let mut acc = 0.0;
    for _ in 0..iterations {
        acc += (r * (1.0 - 2.0 * x)).abs().ln();
        x = r * x * (1.0 - x);
    }
    acc / iterations as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use crate::skeleton::MapKind;

    #[test]
    fn logistic_full_chaos() {
        let l = lyapunov_logistic(4.0, 0.3, 1_000_000);
        assert!((l - std::f64::consts::LN_2).abs() < 0.01, "{l}");
    }

    #[test]
    fn logistic_stable_fixed_point() {
        // r = 2.5: fixed point 0.6 with multiplier 2 - r = -0.5.
        let l = lyapunov_logistic(2.5, 0.3, 10_000);
        assert!((l - 0.5f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn reduced_fixed_point_matches_derivative() {
        let p = ModelParams::reduced(100.0, 1.64, 0.03f64.powi(2), 0.5);
        let map = SkeletonMap::new(MapKind::Reduced1D, p);
        let fp = map.fixed_point().unwrap();
        let expected = map.map_1d_derivative(fp.lambda).unwrap().abs().ln();
        let l = lyapunov(&map, 2000).unwrap();
        assert!(expected < 0.0);
        assert!((l - expected).abs() < 1e-6);
    }

    #[test]
    fn skeleton_fixed_point_negative() {
        let map = SkeletonMap::new(MapKind::Skeleton3D, ModelParams::table1());
        let l = lyapunov(&map, 5000).unwrap();
        let eig = map.jacobian(&map.fixed_point().unwrap()).unwrap();
        let expected = eig.last().unwrap().norm().ln();
        assert!(l < 0.0);
        assert!((l - expected).abs() < 1e-3, "{l} vs {expected}");
    }
}
