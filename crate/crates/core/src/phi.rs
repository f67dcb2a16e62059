//! Price-impact matrix `Phi = (phi - beta) I + beta J`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiMatrix {
    /// Diagonal entry phi.
    pub diag: f64,
    /// Off-diagonal entry beta.
    pub offdiag: f64,
    pub dim: usize,
}

impl PhiMatrix {
    pub fn new(diag: f64, offdiag: f64, dim: usize) -> Self {
        PhiMatrix { diag, offdiag, dim }
    }

    /// Eigenvalue of the all-ones direction, `phi + (M-1) beta`.
    pub fn common_mode(&self) -> f64 {
        self.diag + (self.dim as f64 - 1.0) * self.offdiag
    }

    /// Eigenvalue shared by the `M-1` directions orthogonal to the all-ones
    /// vector, `phi - beta`.
    pub fn orthogonal_mode(&self) -> f64 {
        self.diag - self.offdiag
    }

    /// Largest eigenvalue. The common mode when `beta >= 0`, i.e. `m >= 1`.
    pub fn max_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            self.diag
        } else {
            self.common_mode().max(self.orthogonal_mode())
        }
    }

    /// Spectral radius over both distinct eigenvalues.
    pub fn spectral_radius(&self) -> f64 {
        if self.dim == 1 {
            self.diag.abs()
        } else {
            self.common_mode().abs().max(self.orthogonal_mode().abs())
        }
    }

    pub fn is_stationary(&self) -> bool {
        self.spectral_radius() < 1.0
    }

    /// `Phi x` without forming the matrix.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let sum: f64 = x.iter().sum();
        let d = self.orthogonal_mode();
        for (o, xi) in out.iter_mut().zip(x) {
            *o = d * xi + self.offdiag * sum;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| if i == j { self.diag } else { self.offdiag })
    }
}

/// Impact matrix generated by banks at leverage `lambda` holding `m` assets.
pub fn build_phi(lambda: f64, m: f64, p: &ModelParams) -> PhiMatrix {
    let dim = p.assets as usize;
    if dim == 1 {
        return PhiMatrix::new((lambda - 1.0) / p.gamma, 0.0, 1);
    }
    let phi = (lambda - 1.0) / (p.gamma * m);
    let beta = phi * (m - 1.0) / (dim as f64 - 1.0);
    PhiMatrix::new(phi, beta, dim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(m: u32) -> ModelParams {
        ModelParams { assets: m, ..ModelParams::table1() }
    }

    #[test]
    fn unit_diversification_is_diagonal() {
        let p = params(2);
        let phi = build_phi(11.0, 1.0, &p);
        assert_eq!(phi.offdiag, 0.0);
        assert!((phi.diag - 0.1).abs() < 1e-15);
    }

    #[test]
    fn full_diversification_is_flat() {
        let p = params(5);
        let phi = build_phi(21.0, 5.0, &p);
        assert!((phi.diag - phi.offdiag).abs() < 1e-15);
        assert!((phi.diag - 20.0 / (100.0 * 5.0)).abs() < 1e-15);
        assert!((phi.max_eigenvalue() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn boundary_leverage_has_unit_eigenvalue() {
        let p = params(4);
        let phi = build_phi(p.gamma + 1.0, 2.5, &p);
        assert!((phi.common_mode() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn apply_matches_dense() {
        let phi = PhiMatrix::new(0.3, 0.05, 4);
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut out = [0.0; 4];
        phi.apply(&x, &mut out);
        let dense = phi.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..4 {
            assert!((out[i] - dense[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_case() {
        let p = params(1);
        let phi = build_phi(51.0, 1.0, &p);
        assert_eq!(phi.dim, 1);
        assert!((phi.diag - 0.5).abs() < 1e-15);
        assert_eq!(phi.offdiag, 0.0);
    }
}
