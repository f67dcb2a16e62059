//! Deterministic maps of the slow variables in the many-rebalancings limit.
//!
//! All three maps update the perceived variance by exponential smoothing
//! towards the variance the current leverage generates, then re-solve the
//! portfolio problem with the updated expectation:
//!
//! * `Skeleton3D`: the full model, state `(lambda, Sigma_d, Sigma_u)`.
//! * `Reduced1D`: one asset, one bank, no factor. Leverage alone is the state
//!   since `lambda = 1 / (alpha sqrt(Sigma))`.
//! * `Igarch1TimeScale`: the reduced model with one rebalancing per period,
//!   so the expectation tracks the one-step return variance.

use nalgebra::{Complex, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::asymptotic_covariance;
use crate::params::ModelParams;
use crate::portfolio::{optimal_diversification, solve_leverage, DomainFlags, SlowState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Skeleton3D,
    Reduced1D,
    Igarch1TimeScale,
}

impl MapKind {
    pub fn name(self) -> &'static str {
        match self {
            MapKind::Skeleton3D => "skeleton3d",
            MapKind::Reduced1D => "reduced1d",
            MapKind::Igarch1TimeScale => "igarch",
        }
    }

    pub fn is_scalar(self) -> bool {
        !matches!(self, MapKind::Skeleton3D)
    }
}

impl std::str::FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skeleton3d" | "skeleton" | "3d" => Ok(MapKind::Skeleton3D),
            "reduced1d" | "reduced" | "1d" => Ok(MapKind::Reduced1D),
            "igarch" => Ok(MapKind::Igarch1TimeScale),
            other => Err(Error::InvalidArgument(format!("unknown map kind {other:?}"))),
        }
    }
}

/// Result of one map iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: SlowState,
    pub flags: DomainFlags,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonMap {
    pub kind: MapKind,
    pub params: ModelParams,
}

impl SkeletonMap {
    pub fn new(kind: MapKind, params: ModelParams) -> Self {
        SkeletonMap { kind, params }
    }

    pub fn dim(&self) -> usize {
        if self.kind.is_scalar() {
            1
        } else {
            3
        }
    }

    /// Slow state of a scalar map at leverage `lambda`.
    pub fn scalar_state(&self, lambda: f64) -> SlowState {
        let a = self.params.alpha * lambda;
        SlowState { lambda, sigma_d: 1.0 / (a * a), sigma_u: 0.0, m: 1.0 }
    }

    /// Variance generated at leverage `lambda` (scalar maps).
    fn scalar_target(&self, lambda: f64) -> f64 {
        let p = &self.params;
        let phi = (lambda - 1.0) / p.gamma;
        match self.kind {
            MapKind::Igarch1TimeScale => p.sigma_eps / (1.0 - phi * phi),
            _ => p.sigma_eps / ((1.0 - phi) * (1.0 - phi)),
        }
    }

    /// One iteration. Fails only if the input state itself is outside the
    /// region where the generated variance is defined.
    pub fn step(&self, s: &SlowState) -> Result<Step> {
        let p = &self.params;
        match self.kind {
            MapKind::Skeleton3D => {
                let m = optimal_diversification(s.lambda, s.sigma_d, s.sigma_u, p.alpha)?;
                let (td, tu) = asymptotic_covariance(s.lambda, m, p)?;
                let sd = p.omega * s.sigma_d + (1.0 - p.omega) * td;
                let su = p.omega * s.sigma_u + (1.0 - p.omega) * tu;
                let (state, flags) = SlowState::from_expectations(sd, su, p)?;
                Ok(Step { state, flags })
            }
            MapKind::Reduced1D | MapKind::Igarch1TimeScale => {
                let lambda = self.map_1d(s.lambda)?;
                let state = self.scalar_state(lambda);
                let flags = DomainFlags { leverage: !p.in_leverage_domain(lambda), diversification: false };
                Ok(Step { state, flags })
            }
        }
    }

    /// The scalar map `f(lambda)`.
    pub fn map_1d(&self, lambda: f64) -> Result<f64> {
        let p = &self.params;
        if !self.kind.is_scalar() {
            return Err(Error::InvalidArgument("map_1d needs a scalar map kind".into()));
        }
        let phi = (lambda - 1.0) / p.gamma;
        if !(phi.abs() < 1.0) {
            return Err(Error::NonStationary(phi.abs()));
        }
        let s = p.omega / (lambda * lambda) + (1.0 - p.omega) * p.alpha * p.alpha * self.scalar_target(lambda);
        Ok(1.0 / s.sqrt())
    }

    /// Analytic derivative of the scalar map.
    pub fn map_1d_derivative(&self, lambda: f64) -> Result<f64> {
        let p = &self.params;
        let phi = (lambda - 1.0) / p.gamma;
        if !(phi.abs() < 1.0) {
            return Err(Error::NonStationary(phi.abs()));
        }
        let a2 = p.alpha * p.alpha;
        let s = p.omega / (lambda * lambda) + (1.0 - p.omega) * a2 * self.scalar_target(lambda);
        let dtarget = match self.kind {
            MapKind::Igarch1TimeScale => p.sigma_eps * 2.0 * phi / ((1.0 - phi * phi).powi(2) * p.gamma),
            MapKind::Reduced1D => 2.0 * p.sigma_eps / ((1.0 - phi).powi(3) * p.gamma),
            MapKind::Skeleton3D => return Err(Error::InvalidArgument("map_1d needs a scalar map kind".into())),
        };
        let ds = -2.0 * p.omega / lambda.powi(3) + (1.0 - p.omega) * a2 * dtarget;
        Ok(-0.5 * s.powf(-1.5) * ds)
    }

    /// Fixed point of the map. The fixed-point conditions do not involve
    /// `omega`, so the result is the same for every memory.
    pub fn fixed_point(&self) -> Result<SlowState> {
        match self.kind {
            MapKind::Skeleton3D => self.fixed_point_3d(),
            _ => {
                let p = &self.params;
                // alpha^2 Sigma_tilde(lambda) = 1 / lambda^2 on [1, gamma + 1).
                let h = |l: f64| p.alpha * p.alpha * self.scalar_target(l) - 1.0 / (l * l);
                let mut lo = 1.0;
                let mut hi = p.leverage_ceiling() * (1.0 - 1e-15);
                if !(h(lo) <= 0.0 && h(hi) > 0.0) {
                    return Err(Error::NoFixedPointInDomain);
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if h(mid) > 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                    if hi - lo <= 4.0 * f64::EPSILON * hi {
                        break;
                    }
                }
                Ok(self.scalar_state(0.5 * (lo + hi)))
            }
        }
    }

    /// Expectation-space map at zero memory, `Sigma -> Sigma_tilde(L(Sigma))`.
    fn target_of(&self, sd: f64, su: f64) -> Result<(f64, f64)> {
        let p = &self.params;
        let lambda = solve_leverage(sd, su, p)?;
        let m = optimal_diversification(lambda, sd, su, p.alpha)?;
        asymptotic_covariance(lambda, m, p)
    }

    fn fixed_point_3d(&self) -> Result<SlowState> {
        let p = &self.params;
        // Start from expectations that put leverage at a set of interior
        // values and relax with heavy memory, which keeps every eigenvalue
        // of the expectation map inside the unit circle.
        let ceiling = p.leverage_ceiling();
        let mut best: Option<(f64, f64, f64)> = None;
        for &frac in &[0.3, 0.5, 0.1, 0.7, 0.05, 0.9] {
            let lambda0 = 1.0 + frac * (ceiling - 1.0);
            let Some((mut sd, mut su)) = self.expectations_for(lambda0) else { continue };
            let damp = 0.97;
            let mut ok = true;
            for _ in 0..5_000 {
                let Ok((td, tu)) = self.target_of(sd, su) else {
                    ok = false;
                    break;
                };
                let (nd, nu) = (damp * sd + (1.0 - damp) * td, damp * su + (1.0 - damp) * tu);
                let done = (nd - sd).abs() <= 1e-13 * sd && (nu - su).abs() <= 1e-13 * su.max(1e-300);
                sd = nd;
                su = nu;
                if done {
                    break;
                }
            }
            if !ok {
                continue;
            }
            if let Ok(polished) = self.newton_3d(sd, su) {
                best = Some(polished);
                break;
            }
        }
        let (sd, su, _) = best.ok_or(Error::NoFixedPointInDomain)?;
        let (state, flags) = SlowState::from_expectations(sd, su, p)?;
        if flags.leverage {
            return Err(Error::NoFixedPointInDomain);
        }
        Ok(state)
    }

    /// Expectations `(Sigma_eps, s_u)` whose optimal leverage is `lambda`.
    pub(crate) fn expectations_for(&self, lambda: f64) -> Option<(f64, f64)> {
        let p = &self.params;
        let sd = p.sigma_eps;
        let k = p.nim / (2.0 * p.c);
        let a = 1.0 / (p.alpha * p.alpha);
        let b = (sd / k).sqrt() / p.alpha;
        let x = lambda.sqrt();
        let su = (a - b * x) / x.powi(4);
        (su > 0.0).then_some((sd, su))
    }

    fn newton_3d(&self, mut sd: f64, mut su: f64) -> Result<(f64, f64, f64)> {
        let resid = |d: f64, u: f64| -> Result<Vector2<f64>> {
            let (td, tu) = self.target_of(d, u)?;
            Ok(Vector2::new(td / d - 1.0, tu / u - 1.0))
        };
        let mut r = resid(sd, su)?;
        for _ in 0..50 {
            if r.amax() < 1e-14 {
                break;
            }
            // Jacobian in log-coordinates.
            let h = 1e-7;
            let mut jac = Matrix2::zeros();
            for j in 0..2 {
                let (dp, up) = if j == 0 { (sd * (1.0 + h), su) } else { (sd, su * (1.0 + h)) };
                let (dm, um) = if j == 0 { (sd * (1.0 - h), su) } else { (sd, su * (1.0 - h)) };
                let col = (resid(dp, up)? - resid(dm, um)?) / (2.0 * h);
                jac.set_column(j, &col);
            }
            let delta = jac.lu().solve(&(-r)).ok_or(Error::NoFixedPointInDomain)?;
            let mut t = 1.0;
            loop {
                let (nd, nu) = (sd * (1.0 + t * delta[0]), su * (1.0 + t * delta[1]));
                if nd > 0.0 && nu > 0.0 {
                    if let Ok(nr) = resid(nd, nu) {
                        if nr.amax() < r.amax() {
                            sd = nd;
                            su = nu;
                            r = nr;
                            break;
                        }
                    }
                }
                t *= 0.5;
                if t < 1e-6 {
                    return if r.amax() < 1e-11 { Ok((sd, su, r.amax())) } else { Err(Error::NoFixedPointInDomain) };
                }
            }
        }
        if r.amax() < 1e-11 {
            Ok((sd, su, r.amax()))
        } else {
            Err(Error::NoFixedPointInDomain)
        }
    }

    /// Residual of one step from `s`, relative, maximum over coordinates.
    pub fn step_residual(&self, s: &SlowState) -> Result<f64> {
        let next = self.step(s)?.state;
        let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
        let mut r = rel(next.lambda, s.lambda);
        if !self.kind.is_scalar() {
            r = r.max(rel(next.sigma_d, s.sigma_d)).max(rel(next.sigma_u, s.sigma_u));
        }
        Ok(r)
    }

    pub(crate) fn to_vec3(s: &SlowState) -> Vector3<f64> {
        Vector3::new(s.lambda, s.sigma_d, s.sigma_u)
    }

    /// Step in raw coordinates `(lambda, Sigma_d, Sigma_u)` for the 3D map.
    pub(crate) fn step_vec3(&self, x: &Vector3<f64>) -> Result<Vector3<f64>> {
        let s = SlowState { lambda: x[0], sigma_d: x[1], sigma_u: x[2], m: f64::NAN };
        Ok(Self::to_vec3(&self.step(&s)?.state))
    }

    fn fd_jacobian3(&self, x: &Vector3<f64>, rel_step: f64) -> Result<Matrix3<f64>> {
        let mut jac = Matrix3::zeros();
        for j in 0..3 {
            let h = rel_step * x[j].abs().max(1e-300);
            let mut xp = *x;
            let mut xm = *x;
            xp[j] += h;
            xm[j] -= h;
            let col = (self.step_vec3(&xp)? - self.step_vec3(&xm)?) / (2.0 * h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }

    /// Jacobian of one step at `s`, by central differences for the 3D map.
    /// Coordinates are `(lambda, Sigma_d, Sigma_u)`.
    pub fn jacobian_matrix(&self, s: &SlowState) -> Result<Matrix3<f64>> {
        if self.kind.is_scalar() {
            let d = self.map_1d_derivative(s.lambda)?;
            let mut m = Matrix3::zeros();
            m[(0, 0)] = d;
            return Ok(m);
        }
        let x = Self::to_vec3(s);
        let coarse = self.fd_jacobian3(&x, 1e-6)?;
        let fine = self.fd_jacobian3(&x, 5e-7)?;
        // Compare in scaled coordinates so columns are commensurate.
        let scale = |m: &Matrix3<f64>| Matrix3::from_fn(|i, j| m[(i, j)] * x[j] / x[i]);
        let (cs, fs) = (scale(&coarse), scale(&fine));
        let discrepancy = (cs - fs).amax() / cs.amax().max(1.0);
        if discrepancy > 1e-4 {
            return Err(Error::StepTooLarge(discrepancy));
        }
        Ok(fine)
    }

    /// Jacobian eigenvalues sorted by modulus (ascending). Scalar maps give
    /// a single real eigenvalue `f'(lambda)`.
    pub fn jacobian(&self, s: &SlowState) -> Result<Vec<Complex<f64>>> {
        if self.kind.is_scalar() {
            return Ok(vec![Complex::new(self.map_1d_derivative(s.lambda)?, 0.0)]);
        }
        let jac = self.jacobian_matrix(s)?;
        let mut eig: Vec<Complex<f64>> = jac.complex_eigenvalues().iter().copied().collect();
        eig.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.re.total_cmp(&b.re)));
        Ok(eig)
    }
}

/// Joint state of the single-time-scale system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgarchState {
    pub lambda: f64,
    pub sigma2: f64,
    /// Last return.
    pub r: f64,
    pub bank: crate::fast::BankState,
}

/// One step of the single-time-scale system: the return follows an AR(1)
/// with coefficient `(lambda - 1)/gamma`, the variance expectation is
/// smoothed with the squared return, leverage targets `1/(alpha sigma)` and
/// the bank books the return at the new target.
pub fn igarch_step(state: &IgarchState, p: &ModelParams, shock: f64) -> Result<IgarchState> {
    let (r, sigma2, lambda) = igarch_slow(state, p, shock);
    let bank = crate::fast::update_balance_sheet(&state.bank, lambda, r)?;
    Ok(IgarchState { lambda, sigma2, r, bank })
}

/// Return, variance expectation and target leverage of the next step,
/// without touching the balance sheet.
pub fn igarch_slow(state: &IgarchState, p: &ModelParams, shock: f64) -> (f64, f64, f64) {
    let phi = (state.lambda - 1.0) / p.gamma;
    let r = phi * state.r + p.drift + shock;
    let sigma2 = p.omega * state.sigma2 + (1.0 - p.omega) * r * r;
    (r, sigma2, 1.0 / (p.alpha * sigma2.sqrt()))
}
