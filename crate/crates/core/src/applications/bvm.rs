//! Quantitative Bernstein–von Mises bounds for the mean-field posterior.
//!
//! For a posterior π_n ∝ exp(−n fₙ) with mode xₙ*, the surrogate is the product
//! Gaussian γₙ* = N(xₙ*, Dₙ⁻¹) with Dₙ the diagonal part of n∇²fₙ(xₙ*).

use super::GaussianProduct;
use crate::error::{Error, Result};
use crate::potentials::{find_mode, Mode, Potential, PotentialRef, ScalarPotential, Scaled};
use crate::solver::{solve_lifted, SolverConfig};
use crate::stability::ln_incomplete_gamma_bound;
use crate::transport::lp_distance;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive and finite, got {v}")))
    }
}

fn positive_count(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        Err(Error::Param(format!("{name} must be positive")))
    } else {
        Ok(())
    }
}

fn surrogate_at(f: &dyn Potential, n: usize, mode: &Mode) -> Result<(GaussianProduct, Vec<f64>)> {
    let h = f.hessian(&mode.x_star);
    let nf = n as f64;
    let diag: Vec<f64> = (0..f.dim()).map(|i| nf * h[(i, i)]).collect();
    if let Some(v) = diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Param(format!("Hessian diagonal at the mode must be positive, got {v}")));
    }
    let std = diag.iter().map(|v| 1.0 / v.sqrt()).collect();
    Ok((GaussianProduct::new(mode.x_star.clone(), std)?, diag))
}

/// γₙ* = N(xₙ*, Dₙ⁻¹) for the per-observation potential `f` and sample size `n`.
pub fn bvm_surrogate(f: &dyn Potential, n: usize) -> Result<GaussianProduct> {
    positive_count("n", n)?;
    let mode = find_mode(f, &vec![0.0; f.dim()])?;
    Ok(surrogate_at(f, n, &mode)?.0)
}

/// W₂(νₙ*, γₙ*) ≤ 2bₙ√(d/(αₙ³n)) for αₙ-convex, bₙ-smooth fₙ.
pub fn bvm_bound_smooth(alpha_n: f64, b_n: f64, d: usize, n: usize) -> Result<f64> {
    positive("alpha_n", alpha_n)?;
    positive("b_n", b_n)?;
    positive_count("d", d)?;
    positive_count("n", n)?;
    Ok(2.0 * b_n * (d as f64 / (alpha_n.powi(3) * n as f64)).sqrt())
}

/// Local-smoothness form of the BvM bound: the square root of
/// ℓ²(d² + 2d)/(3α⁴n²) + (nb/2)^{d/2}·C(d + 2)sᵈ/(Γ(d/2)α²(nα − τ))·exp(−(nα − τ)s²/2).
///
/// Requires τ ∈ [0, nα) and s > √((d + 2)/(nα − τ)).
#[allow(clippy::too_many_arguments)]
pub fn bvm_bound_local(
    alpha_n: f64,
    b_n: f64,
    ell_n: f64,
    tau_n: f64,
    s_n: f64,
    c: f64,
    d: usize,
    n: usize,
) -> Result<f64> {
    positive("alpha_n", alpha_n)?;
    positive("b_n", b_n)?;
    positive("s_n", s_n)?;
    positive_count("d", d)?;
    positive_count("n", n)?;
    if !(ell_n >= 0.0 && ell_n.is_finite()) {
        return Err(Error::Param(format!("ell_n must be nonnegative, got {ell_n}")));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::Param(format!("C must be nonnegative, got {c}")));
    }
    let (nf, df) = (n as f64, d as f64);
    let a = nf * alpha_n - tau_n;
    if !(tau_n >= 0.0 && a > 0.0) {
        return Err(Error::Domain(format!(
            "tau_n must lie in [0, n*alpha_n) = [0, {}), got {tau_n}",
            nf * alpha_n
        )));
    }
    let s_min = ((df + 2.0) / a).sqrt();
    if !(s_n > s_min) {
        return Err(Error::Domain(format!("s_n must exceed sqrt((d+2)/(n*alpha_n - tau_n)) = {s_min}, got {s_n}")));
    }
    let local = ell_n * ell_n * (df * df + 2.0 * df) / (3.0 * alpha_n.powi(4) * nf * nf);
    let tail = if c == 0.0 {
        0.0
    } else {
        (c.ln() - 0.5 * df * (2.0 * PI).ln() + 0.5 * df * (nf * b_n).ln() - 2.0 * alpha_n.ln()
            + ln_incomplete_gamma_bound(a, s_n, d))
        .exp()
    };
    Ok((local + tail).sqrt())
}

/// Certificates for the local-smoothness bound: ∇²fₙ is ℓ-Lipschitz on B(xₙ*, s) and
/// ‖∇²fₙ(x) − ∇²fₙ(xₙ*)‖² ≤ C·exp(τ‖x − xₙ*‖²/2) outside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalCertificate {
    pub ell: f64,
    pub tau: f64,
    pub s: f64,
    #[serde(rename = "C")]
    pub c: f64,
}

/// Surrogate, bounds and (optionally) the measured distance to the solved posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvMReport {
    pub n: usize,
    pub dim: usize,
    pub alpha_n: f64,
    pub b_n: f64,
    pub x_n_star: Vec<f64>,
    pub mode_grad_norm: f64,
    /// Diagonal of Dₙ = diag(n∇²fₙ(xₙ*)).
    pub d_n: Vec<f64>,
    pub surrogate: GaussianProduct,
    pub bound_smooth: f64,
    pub bound_local: Option<f64>,
    pub local: Option<LocalCertificate>,
    /// lp_distance(p = 2) between the solved mean-field map of n·fₙ and the surrogate map.
    pub measured_w2: Option<f64>,
    /// ‖E[X] − xₙ*‖² under the solved mean-field posterior.
    pub mean_error_sq: Option<f64>,
    pub solver_residual: Option<f64>,
}

/// Builds the BvM report for per-observation potential `f` with certificates
/// αₙ = f.alpha(), bₙ = f.beta(). With `solve`, the mean-field optimizer of n·fₙ is
/// computed and compared with the surrogate.
///
/// The local certificate must also satisfy C ≥ ℓ²s²: segments from xₙ* to points
/// outside the ball pass through the ball, where only the Lipschitz bound applies.
pub fn bvm_report(
    f: PotentialRef,
    n: usize,
    local: Option<LocalCertificate>,
    solve: Option<&SolverConfig>,
) -> Result<BvMReport> {
    positive_count("n", n)?;
    let d = f.dim();
    let (alpha_n, b_n) = (f.alpha(), f.beta());
    let mode = find_mode(f.as_ref(), &vec![0.0; d])?;
    let (surrogate, d_n) = surrogate_at(f.as_ref(), n, &mode)?;
    let bound_smooth = bvm_bound_smooth(alpha_n, b_n, d, n)?;
    let bound_local = match &local {
        Some(lc) => {
            if lc.c < lc.ell * lc.ell * lc.s * lc.s {
                return Err(Error::Domain(format!(
                    "C = {} must dominate ell^2 s^2 = {}",
                    lc.c,
                    lc.ell * lc.ell * lc.s * lc.s
                )));
            }
            Some(bvm_bound_local(alpha_n, b_n, lc.ell, lc.tau, lc.s, lc.c, d, n)?)
        }
        None => None,
    };
    let (mut measured_w2, mut mean_error_sq, mut solver_residual) = (None, None, None);
    if let Some(cfg) = solve {
        let post = Scaled::new(f.clone(), n as f64)?;
        let sol = solve_lifted(&post, cfg)?;
        let gamma = surrogate.to_map(sol.map.grid().clone())?;
        measured_w2 = Some(lp_distance(&sol.map, &gamma, 2.0)?);
        mean_error_sq = Some(
            sol.map
                .marginal_moments()
                .iter()
                .zip(&mode.x_star)
                .map(|((m, _), x)| (m - x).powi(2))
                .sum(),
        );
        solver_residual = Some(sol.residual);
    }
    Ok(BvMReport {
        n,
        dim: d,
        alpha_n,
        b_n,
        x_n_star: mode.x_star,
        mode_grad_norm: mode.grad_norm,
        d_n,
        surrogate,
        bound_smooth,
        bound_local,
        local,
        measured_w2,
        mean_error_sq,
        solver_residual,
    })
}

/// BvM report for the linear-model posterior exp(−n·V_τ) with
/// V_τ(β) = Σ v(βᵢ) + (τ/2)βᵀAβ − τwᵀβ. The smooth bound evaluates to
/// 2√(d(τbₙ + b₀)²/(n(ταₙ + α₀)³)) with αₙ I ⪯ A ⪯ bₙ I and α₀ ≤ v″ ≤ b₀.
pub fn bvm_linreg(
    a: DMatrix<f64>,
    w: DVector<f64>,
    tau: f64,
    prior: Arc<dyn ScalarPotential>,
    n: usize,
    solve: Option<&SolverConfig>,
) -> Result<BvMReport> {
    let f = super::linreg_potential(a, w, tau, prior)?;
    bvm_report(Arc::new(f), n, None, solve)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_bound_plug_in() {
        assert_eq!(bvm_bound_smooth(1.0, 1.0, 4, 100).unwrap(), 0.4);
        assert!(matches!(bvm_bound_smooth(0.0, 1.0, 4, 100), Err(Error::Param(_))));
    }

    #[test]
    fn local_bound_preconditions() {
        assert!(matches!(bvm_bound_local(1.0, 1.0, 0.0, 10.0, 1.0, 1.0, 2, 10), Err(Error::Domain(_))));
        assert!(matches!(bvm_bound_local(1.0, 1.0, 0.0, 0.0, 0.5, 1.0, 2, 10), Err(Error::Domain(_))));
        assert!(bvm_bound_local(1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 2, 10).unwrap() > 0.0);
    }
}
