use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::orbit::{initial_state, iterate, ExitEvent};
use crate::error::Result;
use crate::params::{ModelParams, SweepParam};
use crate::skeleton::{MapKind, SkeletonMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttractorLabel {
    FixedPoint,
    /// Periodic orbit with the given number of distinct points.
    Cycle(usize),
    Aperiodic,
    Exit,
}

impl fmt::Display for AttractorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttractorLabel::FixedPoint => f.write_str("fixed-point"),
            AttractorLabel::Cycle(k) => write!(f, "{k}-cycle"),
            AttractorLabel::Aperiodic => f.write_str("aperiodic"),
            AttractorLabel::Exit => f.write_str("exit"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub transient: usize,
    pub record: usize,
    /// Absolute tolerance for merging recorded values into one cluster.
    pub tolerance: f64,
    /// More distinct clusters than this is labelled aperiodic.
    pub max_clusters: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { transient: 1000, record: 200, tolerance: 1e-6, max_clusters: 64 }
    }
}

impl SweepOptions {
    /// Ten-fold transient for grids that touch bifurcation points.
    pub fn slow(self) -> Self {
        SweepOptions { transient: self.transient * 10, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub value: f64,
    /// Post-transient leverage values.
    pub lambda: Vec<f64>,
    /// Post-transient diversification values.
    pub m: Vec<f64>,
    pub label: AttractorLabel,
    pub exit: Option<ExitEvent>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationDiagram {
    pub kind: MapKind,
    pub param: SweepParam,
    pub points: Vec<BifurcationPoint>,
}

/// Counts clusters of `values` within `tolerance` and labels the attractor.
pub fn classify_attractor(values: &[f64], tolerance: f64, max_clusters: usize) -> AttractorLabel {
    if values.is_empty() {
        return AttractorLabel::Exit;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut clusters = 1;
    let mut anchor = sorted[0];
    for &v in &sorted[1..] {
        if v - anchor > tolerance {
            clusters += 1;
            anchor = v;
        }
    }
    match clusters {
        1 => AttractorLabel::FixedPoint,
        k if k > max_clusters => AttractorLabel::Aperiodic,
        k => AttractorLabel::Cycle(k),
    }
}

fn sweep_point(kind: MapKind, p: ModelParams, value: f64, opts: &SweepOptions) -> BifurcationPoint {
    let map = SkeletonMap::new(kind, p);
    let exit_now = |lambda: f64| BifurcationPoint {
        value,
        lambda: Vec::new(),
        m: Vec::new(),
        label: AttractorLabel::Exit,
        exit: Some(ExitEvent { iteration: 0, lambda }),
    };
    let Ok(start) = initial_state(&map) else { return exit_now(f64::NAN) };
    let orbit = iterate(&map, start, opts.transient, opts.record);
    if orbit.exit.is_some() {
        return BifurcationPoint {
            value,
            lambda: orbit.samples.iter().map(|s| s.lambda).collect(),
            m: orbit.samples.iter().map(|s| s.m).collect(),
            label: AttractorLabel::Exit,
            exit: orbit.exit,
        };
    }
    let lambda: Vec<f64> = orbit.samples.iter().map(|s| s.lambda).collect();
    let label = classify_attractor(&lambda, opts.tolerance, opts.max_clusters);
    BifurcationPoint { value, m: orbit.samples.iter().map(|s| s.m).collect(), lambda, label, exit: None }
}

/// Long-run attractor of the map at each grid value of `param`. Grid points
/// are evaluated in parallel and returned in grid order.
pub fn bifurcation_sweep(
    kind: MapKind,
    param: SweepParam,
    grid: &[f64],
    p: &ModelParams,
    opts: &SweepOptions,
) -> Result<BifurcationDiagram> {
    let params: Vec<ModelParams> = grid.iter().map(|&v| p.with(param, v)).collect::<Result<_>>()?;
    let points = params
        .into_par_iter()
        .zip(grid.par_iter())
        .map(|(q, &v)| sweep_point(kind, q, v, opts))
        .collect();
    Ok(BifurcationDiagram { kind, param, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(classify_attractor(&[1.0, 1.0 + 1e-9], 1e-6, 64), AttractorLabel::FixedPoint);
        assert_eq!(classify_attractor(&[1.0, 2.0, 1.0, 2.0], 1e-6, 64), AttractorLabel::Cycle(2));
        let many: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(classify_attractor(&many, 1e-6, 64), AttractorLabel::Aperiodic);
        assert_eq!(AttractorLabel::Cycle(4).to_string(), "4-cycle");
    }

    #[test]
    fn reduced_cascade() {
        // Below the volatility threshold the reduced map period-doubles as
        // memory decreases.
        let p = ModelParams::reduced(100.0, 1.64, 0.002f64.powi(2), 0.5);
        let grid = [0.9, 0.5, 0.3];
        let d = bifurcation_sweep(MapKind::Reduced1D, SweepParam::Omega, &grid, &p, &SweepOptions::default()).unwrap();
        assert_eq!(d.points[0].label, AttractorLabel::FixedPoint);
        assert_eq!(d.points.len(), 3);
    }
}
