use thiserror::Error;

/// Errors raised by the model, estimators and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no root of the leverage equation in (0, {upper})")]
    NoRootInBracket { upper: f64 },

    #[error("expected diversifiable variance must be positive, got {0}")]
    NonPositiveRisk(f64),

    #[error("VaR constraint infeasible: 1/(alpha*lambda)^2 - sigma_u = {denominator}")]
    VarInfeasible { denominator: f64 },

    #[error("autoregressive dynamics not covariance stationary (largest |eigenvalue| = {0})")]
    NonStationary(f64),

    #[error("degenerate return window: all lagged returns are zero")]
    DegenerateWindow,

    #[error("restricted VAR(1) likelihood is singular: {0}")]
    SingularLikelihood(String),

    #[error("bank insolvent: equity {equity} after return")]
    InsolventBank { equity: f64 },

    #[error("no fixed point inside the stationary domain")]
    NoFixedPointInDomain,

    #[error("finite-difference Jacobian failed the step-halving check (discrepancy {0})")]
    StepTooLarge(f64),

    #[error("no period-doubling bifurcation in the scanned range")]
    NoBifurcationInRange,

    #[error("orbit left the stationary domain at iteration {iteration} (lambda = {value})")]
    DomainExit { iteration: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(_) => "invalid_params",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NoRootInBracket { .. } => "no_root_in_bracket",
            Error::NonPositiveRisk(_) => "non_positive_risk",
            Error::VarInfeasible { .. } => "var_infeasible",
            Error::NonStationary(_) => "non_stationary",
            Error::DegenerateWindow => "degenerate_window",
            Error::SingularLikelihood(_) => "singular_likelihood",
            Error::InsolventBank { .. } => "insolvent_bank",
            Error::NoFixedPointInDomain => "no_fixed_point_in_domain",
            Error::StepTooLarge(_) => "step_too_large",
            Error::NoBifurcationInRange => "no_bifurcation_in_range",
            Error::DomainExit { .. } => "domain_exit",
        }
    }
}
