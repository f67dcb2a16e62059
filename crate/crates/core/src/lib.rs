//! Slow-fast leverage-cycle model.
//!
//! Banks choose leverage and diversification under a Value-at-Risk
//! constraint, their rebalancing moves prices through a VAR(1) impact
//! process, and they update risk expectations adaptively. The crate provides
//! the model building blocks, the deterministic maps obtained in the
//! many-rebalancings limit, stability analysis over those maps, and
//! finite-`n` Monte Carlo.

pub mod analysis;
pub mod error;
pub mod estimation;
pub mod fast;
pub mod montecarlo;
pub mod params;
pub mod phi;
pub mod portfolio;
pub mod skeleton;
pub mod special;

pub use error::{Error, Result};
pub use params::{FastSteps, ModelParams, SweepParam};
pub use phi::{build_phi, PhiMatrix};
pub use portfolio::{optimal_diversification, portfolio_variance, solve_leverage, DomainFlags, SlowState};
