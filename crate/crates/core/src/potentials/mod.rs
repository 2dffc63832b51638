//! Target potentials V = −log π (up to a constant), their derivatives,
//! convexity certificates, parametric families and mode finding.

mod builtin;
mod family;
mod mode;
mod scalar;

pub use builtin::{
    Contaminated, FnPotential, Logistic, Quadratic, Scaled, Separable, SoftplusPerturbed,
};
pub use family::{
    builtin_family, fd_grad_theta_grad, ContaminationPath, FamilyKind, FamilyParams,
    GaussianMeanShift, GaussianPrecisionScale, LinRegTau, ParametricFamily,
};
pub use mode::{find_mode, find_mode_with, Mode, MODE_TOL};
pub use scalar::{GaussianScalar, ScalarPotential, SoftplusQuadratic};

use crate::error::{finite, Error, Result};
use nalgebra::{DMatrix, SymmetricEigen};
use std::sync::Arc;

/// A strongly log-concave target described by its potential and a certified band
/// α I ⪯ ∇²V ⪯ β I.
pub trait Potential: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], g: &mut [f64]);
    /// Row-major d×d Hessian.
    fn hessian_into(&self, x: &[f64], h: &mut [f64]);
    fn alpha(&self) -> f64;
    fn beta(&self) -> f64;
    fn label(&self) -> String;

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = vec![0.0; d * d];
        self.hessian_into(x, &mut h);
        DMatrix::from_row_slice(d, d, &h)
    }
}

pub type PotentialRef = Arc<dyn Potential>;

/// Checked evaluation of V(x).
pub fn eval(p: &dyn Potential, x: &[f64]) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::shape(p.dim(), x.len()));
    }
    finite(p.value(x), &p.label())
}

/// Extreme eigenvalues of a symmetric matrix; rejects asymmetric input.
pub fn symmetric_bounds(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    if !m.is_square() {
        return Err(Error::Param(format!("matrix is {}x{}, not square", m.nrows(), m.ncols())));
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > 1e-12 * scale {
        return Err(Error::Param("matrix is not symmetric".into()));
    }
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    Ok((ev.min(), ev.max()))
}

/// Extreme eigenvalues of a symmetric positive definite matrix.
pub fn spd_bounds(m: &DMatrix<f64>) -> Result<(f64, f64)> {
    let (lo, hi) = symmetric_bounds(m)?;
    if lo <= 0.0 || !lo.is_finite() {
        return Err(Error::Param(format!("matrix is not positive definite (min eigenvalue {lo:.3e})")));
    }
    Ok((lo, hi))
}

pub(crate) fn check_certificates(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    if !(beta >= alpha && beta.is_finite()) {
        return Err(Error::Param(format!("beta must satisfy beta >= alpha, got {beta} < {alpha}")));
    }
    Ok(())
}

/// Largest relative discrepancy between `grad`/`hessian` and central differences of
/// `value`/`grad` at `x`, using step `h`.
pub fn derivative_discrepancy(p: &dyn Potential, x: &[f64], h: f64) -> (f64, f64) {
    let d = p.dim();
    let g = p.grad(x);
    let hs = p.hessian(x);
    let mut xp = x.to_vec();
    let (mut eg, mut eh) = (0.0f64, 0.0f64);
    for i in 0..d {
        xp[i] = x[i] + h;
        let (fp, gp) = (p.value(&xp), p.grad(&xp));
        xp[i] = x[i] - h;
        let (fm, gm) = (p.value(&xp), p.grad(&xp));
        xp[i] = x[i];
        let fd = (fp - fm) / (2.0 * h);
        eg = eg.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        for j in 0..d {
            let fdh = (gp[j] - gm[j]) / (2.0 * h);
            eh = eh.max((fdh - hs[(j, i)]).abs() / hs[(j, i)].abs().max(1.0));
        }
    }
    (eg, eh)
}
