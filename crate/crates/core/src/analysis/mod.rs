//! Stability analysis over the deterministic maps.

mod bifurcation;
mod boundaries;
mod envelope;
mod lyapunov;
mod orbit;
mod stats;

pub use bifurcation::{bifurcation_sweep, classify_attractor, AttractorLabel, BifurcationDiagram, BifurcationPoint, SweepOptions};
pub use boundaries::{
    find_omega2, find_omega_star, flip_indicator, map_maximum, omega_star_from_map_maximum, threshold_sigma, OmegaStar,
    StarOptions,
};
pub use envelope::{perturbation_envelope, variance_range, Envelope, EnvelopeReport};
pub use lyapunov::{lyapunov, lyapunov_logistic};
pub use orbit::{initial_state, iterate, ExitEvent, Orbit};
pub use stats::{amplitude_stats, quantile_type1};
