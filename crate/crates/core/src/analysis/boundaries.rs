use serde::{Deserialize, Serialize};

use super::orbit::{initial_state, iterate};
use crate::error::{Error, Result};
use crate::params::SweepParam;
use crate::portfolio::SlowState;
use crate::skeleton::{MapKind, SkeletonMap};

fn with_omega(map: &SkeletonMap, omega: f64) -> SkeletonMap {
    let mut m = map.clone();
    m.params.omega = omega;
    m
}

/// `1 +` the most negative real Jacobian eigenvalue at `state`. Negative
/// once an eigenvalue has crossed -1.
pub fn flip_indicator(map: &SkeletonMap, state: &SlowState) -> Result<f64> {
    let eig = map.jacobian(state)?;
    let scale = eig.iter().map(|e| e.norm()).fold(1.0, f64::max);
    let most_negative = eig
        .iter()
        .filter(|e| e.im.abs() <= 1e-9 * scale)
        .map(|e| e.re)
        .fold(f64::INFINITY, f64::min);
    Ok(1.0 + most_negative)
}

/// Memory below which the fixed point loses stability through a flip.
///
/// The fixed point does not move with memory, so it is computed once and
/// the indicator is bisected in `omega` to 1e-9.
pub fn find_omega2(map: &SkeletonMap) -> Result<f64> {
    let fp = map.fixed_point()?;
    let indicator = |omega: f64| flip_indicator(&with_omega(map, omega), &fp);
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-9);
    if indicator(lo)? >= 0.0 {
        return Err(Error::NoBifurcationInRange);
    }
    if indicator(hi)? < 0.0 {
        return Err(Error::NoBifurcationInRange);
    }
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if indicator(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Outcome of the stationarity-exit search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OmegaStar {
    Value(f64),
    /// The orbit stays in the domain down to `omega = 0`.
    AlwaysStationary,
    /// The orbit exits even at the top of the scanned range.
    NeverStationary,
}

impl OmegaStar {
    pub fn value(self) -> Option<f64> {
        match self {
            OmegaStar::Value(v) => Some(v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarOptions {
    pub transient: usize,
    pub record: usize,
    pub tolerance: f64,
    /// Largest memory tested.
    pub omega_max: f64,
}

impl Default for StarOptions {
    fn default() -> Self {
        StarOptions { transient: 1000, record: 200, tolerance: 1e-4, omega_max: 0.99 }
    }
}

fn stays(map: &SkeletonMap, omega: f64, opts: &StarOptions) -> bool {
    let m = with_omega(map, omega);
    match initial_state(&m) {
        Ok(start) => iterate(&m, start, opts.transient, opts.record).exit.is_none(),
        Err(_) => false,
    }
}

/// Smallest memory whose orbit stays inside `[1, gamma + 1)`, by bisection
/// between an exiting and a staying memory.
pub fn find_omega_star(map: &SkeletonMap, opts: &StarOptions) -> OmegaStar {
    if stays(map, 0.0, opts) {
        return OmegaStar::AlwaysStationary;
    }
    if !stays(map, opts.omega_max, opts) {
        return OmegaStar::NeverStationary;
    }
    let (mut lo, mut hi) = (0.0, opts.omega_max);
    while hi - lo > opts.tolerance {
        let mid = 0.5 * (lo + hi);
        if stays(map, mid, opts) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    OmegaStar::Value(hi)
}

/// Maximum of a scalar map over `[1, gamma + 1)`, as `(argmax, max)`.
pub fn map_maximum(map: &SkeletonMap) -> Result<(f64, f64)> {
    if !map.kind.is_scalar() {
        return Err(Error::InvalidArgument("map maximum needs a scalar map".into()));
    }
    let top = map.params.leverage_ceiling();
    let f = |l: f64| map.map_1d(l).unwrap_or(0.0);
    let grid = 4000;
    let step = (top - 1.0) / grid as f64;
    let mut best = (1.0, f(1.0));
    for i in 1..grid {
        let l = 1.0 + i as f64 * step;
        let v = f(l);
        if v > best.1 {
            best = (l, v);
        }
    }
    // Golden-section refinement around the best grid point.
    let (mut a, mut b) = ((best.0 - step).max(1.0), (best.0 + step).min(top - 1e-12));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let x = 0.5 * (a + b);
    Ok(if f(x) >= best.1 { (x, f(x)) } else { best })
}

/// Memory at which the maximum of a scalar map equals `gamma + 1`.
pub fn omega_star_from_map_maximum(map: &SkeletonMap) -> Result<OmegaStar> {
    let ceiling = map.params.leverage_ceiling();
    let excess = |omega: f64| map_maximum(&with_omega(map, omega)).map(|(_, v)| v - ceiling);
    if excess(0.0)? <= 0.0 {
        return Ok(OmegaStar::AlwaysStationary);
    }
    let (mut lo, mut hi) = (0.0, 1.0 - 1e-6);
    if excess(hi)? > 0.0 {
        return Ok(OmegaStar::NeverStationary);
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OmegaStar::Value(0.5 * (lo + hi)))
}

/// Idiosyncratic volatility above which the reduced map has no flip for any
/// memory. Scans `grid` (ascending volatilities) for the first change from
/// "flip exists" to "no flip", then bisects to 1e-10.
pub fn threshold_sigma(map: &SkeletonMap, grid: &[f64]) -> Result<Option<f64>> {
    if map.kind != MapKind::Reduced1D {
        return Err(Error::InvalidArgument("threshold search is defined for the reduced map".into()));
    }
    let has_flip = |s: f64| -> Result<bool> {
        let p = map.params.with(SweepParam::SigmaEps, s)?;
        match find_omega2(&SkeletonMap::new(map.kind, p)) {
            Ok(_) => Ok(true),
            Err(Error::NoBifurcationInRange) | Err(Error::NoFixedPointInDomain) => Ok(false),
            Err(e) => Err(e),
        }
    };
    let mut prev: Option<f64> = None;
    for &s in grid {
        if has_flip(s)? {
            prev = Some(s);
            continue;
        }
        let Some(mut lo) = prev else { return Ok(None) };
        let mut hi = s;
        while hi - lo > 1e-10 {
            let mid = 0.5 * (lo + hi);
            if has_flip(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return Ok(Some(0.5 * (lo + hi)));
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    fn reduced(s: f64, omega: f64) -> SkeletonMap {
        SkeletonMap::new(MapKind::Reduced1D, ModelParams::reduced(100.0, 1.64, s * s, omega))
    }

    #[test]
    fn reduced_omega2_closed_form() {
        let map = reduced(0.003, 0.5);
        let w2 = find_omega2(&map).unwrap();
        let l = map.fixed_point().unwrap().lambda;
        let k = l / (101.0 - l);
        assert!((w2 - (k - 1.0) / (k + 1.0)).abs() < 1e-8);
        let at = with_omega(&map, w2);
        assert!((at.map_1d_derivative(l).unwrap() + 1.0).abs() < 1e-7);
    }

    #[test]
    fn reduced_threshold_matches_analytic() {
        let map = reduced(0.003, 0.5);
        let grid: Vec<f64> = (1..=40).map(|i| 0.0005 * i as f64).collect();
        let t = threshold_sigma(&map, &grid).unwrap().unwrap();
        assert!((t - 1.0 / (1.64 * 100.0)).abs() < 1e-8, "{t}");
    }

    #[test]
    fn no_flip_above_threshold() {
        assert_eq!(find_omega2(&reduced(0.03, 0.5)), Err(Error::NoBifurcationInRange));
    }

    #[test]
    fn max_of_map_decreases_in_memory() {
        // Holds across the whole grid only well below the volatility
        // threshold; nearer to it the maximum turns up again at large memory.
        let mut prev = f64::INFINITY;
        for i in 1..=9 {
            let (_, v) = map_maximum(&reduced(0.001, 0.1 * i as f64)).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn omega_star_orbit_vs_map_maximum() {
        let map = reduced(0.003, 0.5);
        let by_orbit = find_omega_star(&map, &StarOptions::default()).value().unwrap();
        let by_max = omega_star_from_map_maximum(&map).unwrap().value().unwrap();
        assert!(by_orbit >= by_max - 1e-4, "{by_orbit} vs {by_max}");
        assert!((by_orbit - by_max).abs() < 2e-2, "{by_orbit} vs {by_max}");
        let w2 = find_omega2(&map).unwrap();
        assert!(by_orbit < w2);
    }
}
