use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bifurcation::{classify_attractor, AttractorLabel};
use super::lyapunov::lyapunov;
use super::orbit::{initial_state, iterate};
use crate::error::{Error, Result};
use crate::estimation::{aggregate_variance_ar1, Var1Fit};
use crate::phi::build_phi;
use crate::portfolio::{SlowState, DomainFlags};
use crate::skeleton::{MapKind, SkeletonMap};
use crate::special::{chi2_quantile, normal_quantile};

/// Width of the 90% interval of a variance estimate with `dof` degrees of
/// freedom, relative to the true variance.
pub fn variance_range(dof: f64) -> Result<f64> {
    Ok((chi2_quantile(0.95, dof)? - chi2_quantile(0.05, dof)?) / dof)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    /// Largest 90% leverage interval over the attractor's points.
    pub delta_lambda: f64,
    /// `(lambda, width)` per attractor point, in orbit order.
    pub per_point: Vec<(f64, f64)>,
    /// Spread of the deterministic attractor itself.
    pub cycle_amplitude: f64,
    pub lyapunov: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum Envelope {
    Applicable(EnvelopeReport),
    /// The skeleton is chaotic (or aperiodic), so linearization says nothing.
    NotApplicable { lyapunov: f64 },
}

/// Linear-noise estimate of the 90% leverage interval when estimates come
/// from windows of `n` fast returns.
///
/// Each estimate `j` is replaced by its 90% sampling range `r_j` and pushed
/// through the skeleton step by central differences, giving noise columns
/// `B`. The stationary spread then solves `P = J P J' + B B'` around the
/// attractor, and the interval is `sqrt(P_lambda)`.
///
/// The reduced map perturbs the variance and the AR coefficient; the 3D map
/// perturbs the idiosyncratic and factor variances at the true `Phi`.
pub fn perturbation_envelope(kind: MapKind, p: &crate::params::ModelParams, n: u32) -> Result<Envelope> {
    if n < 2 {
        return Err(Error::InvalidArgument("envelope needs n >= 2".into()));
    }
    if kind == MapKind::Igarch1TimeScale {
        return Err(Error::InvalidArgument("envelope is defined for the two-time-scale maps".into()));
    }
    let map = SkeletonMap::new(kind, p.clone());
    let lyap = lyapunov(&map, 2000)?;
    if lyap > 0.0 {
        return Ok(Envelope::NotApplicable { lyapunov: lyap });
    }
    let start = initial_state(&map)?;
    let orbit = iterate(&map, start, 5000, 128);
    if let Some(e) = orbit.exit {
        return Err(Error::DomainExit { iteration: e.iteration, value: e.lambda });
    }
    let lambdas: Vec<f64> = orbit.samples.iter().map(|s| s.lambda).collect();
    let period = match classify_attractor(&lambdas, 1e-6, 64) {
        AttractorLabel::FixedPoint => 1,
        AttractorLabel::Cycle(k) => k,
        _ => return Ok(Envelope::NotApplicable { lyapunov: lyap }),
    };
    let cycle: Vec<SlowState> = orbit.samples[orbit.samples.len() - period..].to_vec();

    let dim = map.dim();
    let mut jacs = Vec::with_capacity(period);
    let mut noise = Vec::with_capacity(period);
    for s in &cycle {
        let j = map.jacobian_matrix(s)?;
        jacs.push(DMatrix::from_fn(dim, dim, |a, b| j[(a, b)]));
        noise.push(match kind {
            MapKind::Reduced1D => reduced_noise(&map, s, n)?,
            _ => skeleton_noise(&map, s, n)?,
        });
    }

    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    let mut widths = vec![0.0; period];
    for sweep in 0..100_000 {
        let mut change: f64 = 0.0;
        for t in 0..period {
            let next = &jacs[t] * &cov * jacs[t].transpose() + &noise[t] * noise[t].transpose();
            let i = (t + 1) % period;
            let w = next[(0, 0)].max(0.0).sqrt();
            change = change.max((w - widths[i]).abs());
            widths[i] = w;
            cov = next;
        }
        if sweep > 10 && change <= 1e-13 * widths.iter().cloned().fold(1e-300, f64::max) {
            break;
        }
    }
    let per_point: Vec<(f64, f64)> = cycle.iter().zip(&widths).map(|(s, w)| (s.lambda, *w)).collect();
    let (lo, hi) = lambdas.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    Ok(Envelope::Applicable(EnvelopeReport {
        delta_lambda: widths.iter().cloned().fold(0.0, f64::max),
        per_point,
        cycle_amplitude: hi - lo,
        lyapunov: lyap,
    }))
}

/// Reduced step with the aggregated variance built from estimates.
fn reduced_step(map: &SkeletonMap, lambda: f64, sig2: f64, phi: f64, n: u32) -> Result<f64> {
    let p = &map.params;
    let v = aggregate_variance_ar1(phi, sig2, n)?;
    let s = p.omega / (lambda * lambda) + (1.0 - p.omega) * p.alpha * p.alpha * v;
    Ok(1.0 / s.sqrt())
}

fn reduced_noise(map: &SkeletonMap, s: &SlowState, n: u32) -> Result<DMatrix<f64>> {
    let p = &map.params;
    let nf = n as f64;
    let sig2 = p.sigma_eps / nf;
    let phi = (s.lambda - 1.0) / p.gamma;
    let r_sig = sig2 * variance_range(nf - 1.0)?;
    let r_phi = 2.0 * normal_quantile(0.95)? * ((1.0 - phi * phi) / nf).sqrt();
    let hs = 1e-6 * sig2;
    let hp = 1e-6 * (1.0 - phi.abs()).max(1e-6);
    let d_sig = (reduced_step(map, s.lambda, sig2 + hs, phi, n)? - reduced_step(map, s.lambda, sig2 - hs, phi, n)?) / (2.0 * hs);
    let d_phi = (reduced_step(map, s.lambda, sig2, phi + hp, n)? - reduced_step(map, s.lambda, sig2, phi - hp, n)?) / (2.0 * hp);
    Ok(DMatrix::from_row_slice(1, 2, &[d_sig * r_sig, d_phi * r_phi]))
}

/// 3D step with the slow covariance aggregated from the given fast noise
/// variances at the true impact matrix.
fn skeleton_step_with(map: &SkeletonMap, s: &SlowState, sig_eps: f64, sig_f: f64, n: u32) -> Result<DVector<f64>> {
    let p = &map.params;
    let phi = build_phi(s.lambda, s.m, p);
    let fit = Var1Fit { mu1: phi.common_mode(), mu2: phi.orthogonal_mode(), sig_eps, sig_f, dim: phi.dim };
    let est = fit.aggregate(n as f64)?;
    let sd = p.omega * s.sigma_d + (1.0 - p.omega) * est.sigma_d_hat;
    let su = p.omega * s.sigma_u + (1.0 - p.omega) * est.sigma_u_hat;
    let (next, _flags): (SlowState, DomainFlags) = SlowState::from_expectations(sd, su, p)?;
    Ok(DVector::from_column_slice(&[next.lambda, next.sigma_d, next.sigma_u]))
}

fn skeleton_noise(map: &SkeletonMap, s: &SlowState, n: u32) -> Result<DMatrix<f64>> {
    let p = &map.params;
    let nf = n as f64;
    let mf = p.assets as f64;
    let se = p.sigma_eps / nf;
    let sf = p.sigma_f / nf;
    // Orthogonal modes pool M-1 directions; the common mode has one.
    let r_eps = se * variance_range(nf * (mf - 1.0) - 1.0)?;
    let r_f = (se + mf * sf) * variance_range(nf - 1.0)? / mf;
    let he = 1e-6 * se;
    let hf = 1e-6 * sf.max(se * 1e-3);
    let c_eps = (skeleton_step_with(map, s, se + he, sf, n)? - skeleton_step_with(map, s, se - he, sf, n)?) / (2.0 * he);
    let c_f = (skeleton_step_with(map, s, se, sf + hf, n)? - skeleton_step_with(map, s, se, (sf - hf).max(0.0), n)?)
        / (sf + hf - (sf - hf).max(0.0));
    let mut b = DMatrix::zeros(3, 2);
    b.set_column(0, &(c_eps * r_eps));
    b.set_column(1, &(c_f * r_f));
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;

    #[test]
    fn chi2_range_table() {
        assert!((variance_range(10.0).unwrap() - 1.4367).abs() < 1e-3);
    }

    fn fig8(omega: f64) -> ModelParams {
        ModelParams::reduced(100.0, 1.64, 0.05, omega)
    }

    #[test]
    fn envelope_shrinks_like_inverse_sqrt_n() {
        let mut scaled = Vec::new();
        for &n in &[1_000u32, 10_000, 100_000] {
            let Envelope::Applicable(r) = perturbation_envelope(MapKind::Reduced1D, &fig8(0.4), n).unwrap() else {
                panic!("expected an applicable envelope");
            };
            scaled.push(r.delta_lambda * (n as f64).sqrt());
        }
        assert!((scaled[0] / scaled[2] - 1.0).abs() < 0.01, "{scaled:?}");
    }

    #[test]
    fn envelope_matches_linear_noise_formula() {
        let p = fig8(0.4);
        let map = SkeletonMap::new(MapKind::Reduced1D, p.clone());
        let l = map.fixed_point().unwrap().lambda;
        let phi = (l - 1.0) / p.gamma;
        let a = map.map_1d_derivative(l).unwrap();
        let n = 10_000.0;
        // d lambda'/dV at the fixed point, V = Sigma/(1-phi)^2.
        let v = p.sigma_eps / ((1.0 - phi) * (1.0 - phi));
        let b = -0.5 * l.powi(3) * (1.0 - p.omega) * p.alpha * p.alpha;
        let z = 1.6448536269514722;
        let rel = (variance_range(n - 1.0).unwrap().powi(2) + (2.0 * z * ((1.0 - phi * phi) / n).sqrt() * 2.0 / (1.0 - phi)).powi(2)).sqrt();
        let expected = (b * v * rel).abs() / (1.0 - a * a).sqrt();
        let Envelope::Applicable(r) = perturbation_envelope(MapKind::Reduced1D, &p, n as u32).unwrap() else { panic!() };
        assert!((r.delta_lambda / expected - 1.0).abs() < 2e-3, "{} vs {expected}", r.delta_lambda);
    }

    #[test]
    fn skeleton_envelope_is_finite() {
        let Envelope::Applicable(r) = perturbation_envelope(MapKind::Skeleton3D, &ModelParams::table1(), 10_000).unwrap() else {
            panic!()
        };
        assert!(r.delta_lambda > 0.0 && r.delta_lambda.is_finite());
        assert_eq!(r.per_point.len(), 1);
    }
}
