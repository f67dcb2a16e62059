use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::portfolio::SlowState;
use crate::skeleton::{MapKind, SkeletonMap};

/// Iteration at which an orbit left `[1, gamma + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitEvent {
    pub iteration: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    /// States recorded after the transient.
    pub samples: Vec<SlowState>,
    pub exit: Option<ExitEvent>,
}

/// Iterates `transient + record` steps from `start`, keeping the last
/// `record` states. Stops at the first exit from the leverage domain.
pub fn iterate(map: &SkeletonMap, start: SlowState, transient: usize, record: usize) -> Orbit {
    let mut s = start;
    let mut samples = Vec::with_capacity(record);
    for t in 0..transient + record {
        let exit = ExitEvent { iteration: t + 1, lambda: s.lambda };
        let step = match map.step(&s) {
            Ok(step) => step,
            Err(_) => return Orbit { samples, exit: Some(exit) },
        };
        if step.flags.leverage || !step.state.lambda.is_finite() {
            return Orbit { samples, exit: Some(ExitEvent { iteration: t + 1, lambda: step.state.lambda }) };
        }
        s = step.state;
        if t >= transient {
            samples.push(s);
        }
    }
    Orbit { samples, exit: None }
}

/// Start point for sweeps: the fixed point with a 1% displacement, so an
/// unstable fixed point is left along its unstable direction. Falls back to
/// a mid-domain state when no fixed point exists.
pub fn initial_state(map: &SkeletonMap) -> Result<SlowState> {
    let p = &map.params;
    match map.fixed_point() {
        Ok(fp) => match map.kind {
            MapKind::Skeleton3D => {
                let (s, _) = SlowState::from_expectations(fp.sigma_d * 1.01, fp.sigma_u, p)?;
                Ok(s)
            }
            _ => Ok(map.scalar_state(1.0 + 0.99 * (fp.lambda - 1.0))),
        },
        Err(e) => match map.kind {
            MapKind::Skeleton3D => {
                let (s, _) = SlowState::from_expectations(p.sigma_eps, p.sigma_f.max(p.sigma_eps * 1e-2), p)?;
                if p.in_leverage_domain(s.lambda) {
                    Ok(s)
                } else {
                    Err(e)
                }
            }
            _ => Ok(map.scalar_state(1.0 + 0.5 * p.gamma)),
        },
    }
}
