use levcycle::estimation::{ewma_update, Var1Fit};
use levcycle::portfolio::leverage_residual;
use levcycle::{build_phi, optimal_diversification, portfolio_variance, solve_leverage, ModelParams};
use nalgebra::SymmetricEigen;
use proptest::prelude::*;

fn params(alpha: f64, c: f64, nim: f64) -> ModelParams {
    ModelParams { alpha, c, nim, ..ModelParams::table1() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn leverage_root_is_unique_and_var_binds(
        ln_sd in -12.0f64..-2.0,
        ratio in 0.0f64..5.0,
        alpha in 0.5f64..4.0,
        c in 0.01f64..1.0,
        nim in 0.01f64..0.3,
    ) {
        let p = params(alpha, c, nim);
        let sd = ln_sd.exp();
        let su = ratio * sd;
        let lambda = solve_leverage(sd, su, &p).unwrap();
        prop_assert!(lambda > 0.0);
        prop_assert!(leverage_residual(lambda, sd, su, &p).abs() < 1e-10);
        // The quartic in sqrt(lambda) is increasing: no second root on either side.
        let k = nim / (2.0 * c);
        let (a, b) = (1.0 / (alpha * alpha), (sd / k).sqrt() / alpha);
        let q = |x: f64| su * x.powi(4) + b * x - a;
        let x = lambda.sqrt();
        prop_assert!(q(0.5 * x) < 0.0);
        if su > 0.0 {
            prop_assert!(q(1.5 * x) > 0.0);
        }
        // VaR binds at the chosen diversification.
        if let Ok(m) = optimal_diversification(lambda, sd, su, alpha) {
            let var = alpha * alpha * lambda * lambda * portfolio_variance(sd, su, m);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn largest_eigenvalue_for_diversified_banks(
        dim in 2u32..=10,
        lambda in 1.0f64..101.0,
        frac in 0.0f64..=1.0,
    ) {
        let p = ModelParams { assets: dim, ..ModelParams::table1() };
        let m = 1.0 + frac * (dim as f64 - 1.0);
        let phi = build_phi(lambda, m, &p);
        let eig = SymmetricEigen::new(phi.to_dense()).eigenvalues;
        let top = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((top - (lambda - 1.0) / p.gamma).abs() < 1e-12);
        prop_assert!((phi.max_eigenvalue() - top).abs() < 1e-12);
    }

    #[test]
    fn ewma_stays_between_inputs(prev in 0.0f64..10.0, est in 0.0f64..10.0, omega in 0.0f64..=1.0) {
        let v = ewma_update(prev, est, omega);
        prop_assert!(v >= prev.min(est) - 1e-15 && v <= prev.max(est) + 1e-15);
    }

    #[test]
    fn aggregated_variances_are_nonnegative(
        mu1 in -0.95f64..0.95,
        mu2 in -0.95f64..0.95,
        se in 1e-6f64..1e-2,
        sf in 0.0f64..1e-2,
        dim in 2usize..8,
        n in 3u32..5000,
    ) {
        let est = Var1Fit { mu1, mu2, sig_eps: se, sig_f: sf, dim }.aggregate(n as f64).unwrap();
        prop_assert!(est.sigma_d_hat > 0.0);
        // Total variance of a single asset's aggregated return is positive.
        prop_assert!(est.sigma_d_hat + est.sigma_u_hat > 0.0);
    }
}
