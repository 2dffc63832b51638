//! Derivative of the optimal map with respect to a scalar parameter, computed by a
//! Galerkin discretization of the weak equation B(S, R) = −∫⟨∂θ∇V∘T, R⟩dρ in an
//! orthonormal Hermite basis, with first-order prediction and finite-difference checks.

use crate::error::{Error, Result};
use crate::numerics::{gauss_hermite, pairwise_sum};
use crate::potentials::{ParametricFamily, Potential};
use crate::solver::{solve_lifted_with, Init, SolverConfig};
use crate::transport::{MCQuadrature, QuantileGrid, TransportMap};
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

const MAX_DEGREE: usize = 24;
const CHUNK: usize = 512;

/// Orthonormal probabilists' Hermite polynomials h_0..h_K on L²(N(0, 1)), with
/// h_k′ = √k·h_{k−1}.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteBasis {
    degree: usize,
    /// Monomial coefficients: h_k(u) = Σ_j poly[k][j]·u^j.
    poly: Vec<Vec<f64>>,
}

impl HermiteBasis {
    pub fn new(degree: usize) -> Result<Self> {
        if degree > MAX_DEGREE {
            return Err(Error::Param(format!("basis degree must be <= {MAX_DEGREE}, got {degree}")));
        }
        let mut poly: Vec<Vec<f64>> = vec![vec![1.0]];
        for k in 0..degree {
            let mut next = vec![0.0; k + 2];
            for (j, c) in poly[k].iter().enumerate() {
                next[j + 1] += c;
            }
            if k > 0 {
                let s = (k as f64).sqrt();
                for (j, c) in poly[k - 1].iter().enumerate() {
                    next[j] -= s * c;
                }
            }
            let norm = ((k + 1) as f64).sqrt();
            next.iter_mut().for_each(|c| *c /= norm);
            poly.push(next);
        }
        Ok(Self { degree, poly })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions, K + 1.
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn poly(&self, k: usize) -> &[f64] {
        &self.poly[k]
    }

    /// h_0(u)..h_K(u) by the three-term recursion.
    pub fn eval_into(&self, u: f64, out: &mut [f64]) {
        out[0] = 1.0;
        if self.degree >= 1 {
            out[1] = u;
        }
        for k in 1..self.degree {
            out[k + 1] = (u * out[k] - (k as f64).sqrt() * out[k - 1]) / ((k + 1) as f64).sqrt();
        }
    }

    pub fn eval(&self, u: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.eval_into(u, &mut v);
        v
    }

    /// h_0′(u)..h_K′(u).
    pub fn deriv(&self, u: f64) -> Vec<f64> {
        let h = self.eval(u);
        (0..self.len()).map(|k| if k == 0 { 0.0 } else { (k as f64).sqrt() * h[k - 1] }).collect()
    }

    /// Gram matrix in L²(ρ₁) by an exact Gauss–Hermite rule.
    pub fn gram_l2(&self) -> DMatrix<f64> {
        let (x, w) = gauss_hermite(self.len() + 1);
        let n = self.len();
        DMatrix::from_fn(n, n, |a, b| {
            x.iter().zip(&w).map(|(&u, &wi)| {
                let h = self.eval(u);
                wi * h[a] * h[b]
            }).sum()
        })
    }

    /// Gram matrix in H¹(ρ₁): ∫(h_a h_b + h_a′h_b′)dρ₁.
    pub fn gram_h1(&self) -> DMatrix<f64> {
        let (x, w) = gauss_hermite(self.len() + 1);
        let n = self.len();
        DMatrix::from_fn(n, n, |a, b| {
            x.iter().zip(&w).map(|(&u, &wi)| {
                let (h, dh) = (self.eval(u), self.deriv(u));
                wi * (h[a] * h[b] + dh[a] * dh[b])
            }).sum()
        })
    }

    /// Monomial coefficients of h_a′·h_b′.
    fn deriv_product(&self, a: usize, b: usize) -> Vec<f64> {
        if a == 0 || b == 0 {
            return vec![0.0];
        }
        let (pa, pb) = (&self.poly[a - 1], &self.poly[b - 1]);
        let s = ((a * b) as f64).sqrt();
        let mut out = vec![0.0; pa.len() + pb.len() - 1];
        for (i, x) in pa.iter().enumerate() {
            for (j, y) in pb.iter().enumerate() {
                out[i + j] += s * x * y;
            }
        }
        out
    }
}

/// Mean over the quadrature points of a vector-valued integrand, reduced in fixed-size
/// chunks followed by a pairwise sum over chunks.
fn chunked_mean(
    n: usize,
    width: usize,
    mut f: impl FnMut(usize, &mut [f64]),
) -> Vec<f64> {
    let mut partials: Vec<Vec<f64>> = Vec::with_capacity(n.div_ceil(CHUNK));
    let mut k = 0;
    while k < n {
        let mut acc = vec![0.0; width];
        for kk in k..(k + CHUNK).min(n) {
            f(kk, &mut acc);
        }
        partials.push(acc);
        k += CHUNK;
    }
    let mut out = vec![0.0; width];
    let mut col = vec![0.0; partials.len()];
    for (r, o) in out.iter_mut().enumerate() {
        for (c, p) in col.iter_mut().zip(&partials) {
            *c = p[r];
        }
        *o = pairwise_sum(&col) / n as f64;
    }
    out
}

fn check_inputs(t0: &TransportMap, d: usize, q: &MCQuadrature) -> Result<()> {
    if t0.dim() != d {
        return Err(Error::shape(d, t0.dim()));
    }
    if q.dim() != d {
        return Err(Error::shape(d, q.dim()));
    }
    Ok(())
}

/// Galerkin matrix of B_{θ₀} over the basis {e_i ⊗ h_a}, index (i, a) ↦ i(K+1) + a.
///
/// The Hessian block is averaged over the quadrature points pushed through T0; the
/// slope block ∫h_a′h_b′/(T0_i′)²dρ₁ is exact for the piecewise-constant slopes.
pub fn assemble_bilinear(
    t0: &TransportMap,
    p0: &dyn Potential,
    basis: &HermiteBasis,
    q: &MCQuadrature,
) -> Result<DMatrix<f64>> {
    let d = p0.dim();
    check_inputs(t0, d, q)?;
    let nb = basis.len();
    let n = d * nb;
    let pts = q.points();
    let mut x = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    let mut hv = vec![0.0; n];
    let upper = chunked_mean(q.len(), n * n, |k, acc| {
        let u = pts.row(k);
        t0.eval_into(u, &mut x);
        p0.hessian_into(&x, &mut hess);
        for i in 0..d {
            basis.eval_into(u[i], &mut hv[i * nb..(i + 1) * nb]);
        }
        for r in 0..n {
            let (i, vr) = (r / nb, hv[r]);
            for c in r..n {
                acc[r * n + c] += hess[i * d + c / nb] * vr * hv[c];
            }
        }
    });
    let mut b = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            b[(r, c)] = upper[r * n + c];
            b[(c, r)] = upper[r * n + c];
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval("Hessian block is not finite".into()));
    }
    let grid = t0.grid();
    let moments = grid.segment_moments(2 * basis.degree());
    for i in 0..d {
        for a in 1..nb {
            for bb in a..nb {
                let poly = basis.deriv_product(a, bb);
                let mut v = 0.0;
                for (seg, mk) in moments.iter().enumerate() {
                    let s = t0.slope(i, grid.slope_index(seg));
                    let integral: f64 = poly.iter().zip(mk).map(|(c, m)| c * m).sum();
                    v += integral / (s * s);
                }
                b[(i * nb + a, i * nb + bb)] += v;
                if bb != a {
                    b[(i * nb + bb, i * nb + a)] += v;
                }
            }
        }
    }
    Ok(b)
}

/// Right-hand side −∫(∂θ∇V_{θ₀}∘T0)_j·h_b(u_j)dρ, index (j, b) ↦ j(K+1) + b.
pub fn assemble_rhs(
    fam: &dyn ParametricFamily,
    theta0: f64,
    t0: &TransportMap,
    basis: &HermiteBasis,
    q: &MCQuadrature,
) -> Result<DVector<f64>> {
    let d = fam.dim();
    check_inputs(t0, d, q)?;
    fam.check_theta(theta0)?;
    let nb = basis.len();
    let pts = q.points();
    let mut x = vec![0.0; d];
    let mut g = vec![0.0; d];
    let mut hv = vec![0.0; nb];
    let mut err = None;
    let mean = chunked_mean(q.len(), d * nb, |k, acc| {
        let u = pts.row(k);
        t0.eval_into(u, &mut x);
        if let Err(e) = fam.grad_theta_grad(theta0, &x, &mut g) {
            err.get_or_insert(e);
            return;
        }
        for j in 0..d {
            basis.eval_into(u[j], &mut hv);
            for b in 0..nb {
                acc[j * nb + b] -= g[j] * hv[b];
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let rhs = DVector::from_vec(mean);
    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eval("parameter derivative is not finite".into()));
    }
    Ok(rhs)
}

/// Hermite coefficients of S = ∂θT at θ₀ with solve diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivitySolution {
    pub basis: HermiteBasis,
    pub dim: usize,
    pub theta0: f64,
    /// Row-major d×(K+1): S_i = Σ_k coeffs[i(K+1) + k]·h_k.
    pub coeffs: Vec<f64>,
    /// ‖Bc − rhs‖.
    pub residual: f64,
    pub rhs_norm: f64,
    /// λmax/λmin of the Galerkin matrix.
    pub matrix_condition: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
}

impl SensitivitySolution {
    pub fn coeff(&self, i: usize, k: usize) -> f64 {
        self.coeffs[i * self.basis.len() + k]
    }

    pub fn coord_coeffs(&self, i: usize) -> &[f64] {
        let nb = self.basis.len();
        &self.coeffs[i * nb..(i + 1) * nb]
    }

    /// S_i(u).
    pub fn eval_coord(&self, i: usize, u: f64) -> f64 {
        let h = self.basis.eval(u);
        h.iter().zip(self.coord_coeffs(i)).map(|(a, b)| a * b).sum()
    }

    /// ‖S‖_{L²(ρ)} (the basis is orthonormal).
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// ‖S‖_{H(ρ)}.
    pub fn h1_norm(&self) -> f64 {
        let nb = self.basis.len();
        self.coeffs.iter().enumerate().map(|(r, c)| (1 + r % nb) as f64 * c * c).sum::<f64>().sqrt()
    }

    /// S evaluated at the grid nodes, row-major d×m.
    pub fn node_values(&self, grid: &QuantileGrid) -> Vec<f64> {
        (0..self.dim)
            .flat_map(|i| grid.nodes().iter().map(move |&u| self.eval_coord(i, u)))
            .collect()
    }

    /// ‖D − S‖_{L²(ρ)} for a piecewise-linear D given by row-major node values on
    /// `grid` (affine tails), exact by Gaussian partial moments.
    pub fn l2_distance_to_nodes(&self, grid: &QuantileGrid, values: &[f64]) -> Result<f64> {
        let m = grid.len();
        if values.len() != self.dim * m {
            return Err(Error::shape(self.dim * m, values.len()));
        }
        let nb = self.basis.len();
        let moments = grid.segment_moments(2 * nb.max(2));
        let u = grid.nodes();
        let mut total = 0.0;
        for i in 0..self.dim {
            let mut s_poly = vec![0.0; nb.max(2)];
            for (k, c) in self.coord_coeffs(i).iter().enumerate() {
                for (j, pc) in self.basis.poly(k).iter().enumerate() {
                    s_poly[j] += c * pc;
                }
            }
            let t = &values[i * m..(i + 1) * m];
            for (seg, mk) in moments.iter().enumerate() {
                let l = grid.slope_index(seg);
                let slope = (t[l + 1] - t[l]) / (u[l + 1] - u[l]);
                let mut diff: Vec<f64> = s_poly.iter().map(|c| -c).collect();
                diff[0] += t[l] - slope * u[l];
                diff[1] += slope;
                let mut sq = 0.0;
                for (a, x) in diff.iter().enumerate() {
                    for (b, y) in diff.iter().enumerate() {
                        sq += x * y * mk[a + b];
                    }
                }
                total += sq;
            }
        }
        Ok(total.max(0.0).sqrt())
    }
}

/// Solves the Galerkin system for S = ∂θT^{θ₀} by Cholesky.
pub fn solve_derivative(
    fam: &dyn ParametricFamily,
    theta0: f64,
    t0: &TransportMap,
    basis: &HermiteBasis,
    q: &MCQuadrature,
) -> Result<SensitivitySolution> {
    let p0 = fam.at(theta0)?;
    let b = assemble_bilinear(t0, p0.as_ref(), basis, q)?;
    let rhs = assemble_rhs(fam, theta0, t0, basis, q)?;
    let chol = Cholesky::new(b.clone()).ok_or_else(|| {
        Error::Assembly("Galerkin matrix is not positive definite; increase mc_samples or lower K".into())
    })?;
    let c = chol.solve(&rhs);
    let residual = (&b * &c - &rhs).norm();
    let ev = SymmetricEigen::new(b).eigenvalues;
    let (lo, hi) = (ev.min(), ev.max());
    Ok(SensitivitySolution {
        basis: basis.clone(),
        dim: fam.dim(),
        theta0,
        coeffs: c.as_slice().to_vec(),
        residual,
        rhs_norm: rhs.norm(),
        matrix_condition: hi / lo,
        lambda_min: lo,
        lambda_max: hi,
    })
}

/// Node values of T0 + (θ − θ₀)S; fails if the prediction is no longer increasing.
pub fn first_order_predict(
    t0: &TransportMap,
    s: &SensitivitySolution,
    theta: f64,
    theta0: f64,
) -> Result<TransportMap> {
    if s.dim != t0.dim() {
        return Err(Error::shape(t0.dim(), s.dim));
    }
    let grid = t0.grid().clone();
    let dv = s.node_values(&grid);
    let step = theta - theta0;
    let values: Vec<f64> = t0.values().iter().zip(&dv).map(|(t, v)| t + step * v).collect();
    TransportMap::new(grid, t0.dim(), values)
}

/// Central-difference validation of the Galerkin derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FdCheck {
    pub h: Vec<f64>,
    /// ‖(T^{θ₀+h} − T^{θ₀−h})/(2h) − S‖_{L²(ρ)} for every h.
    pub err: Vec<f64>,
    /// Least-squares slope of log err against log h.
    pub slope: f64,
}

/// Solves at θ₀ and θ₀ ± h on common quadrature points and compares the central
/// difference of the maps with the Galerkin derivative.
pub fn finite_diff_check(
    fam: &dyn ParametricFamily,
    theta0: f64,
    h_list: &[f64],
    cfg: &SolverConfig,
    degree: usize,
) -> Result<(FdCheck, SensitivitySolution)> {
    if h_list.is_empty() {
        return Err(Error::Input("h_list is empty".into()));
    }
    if let Some(h) = h_list.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
        return Err(Error::Input(format!("finite-difference steps must be positive, got {h}")));
    }
    let d = fam.dim();
    let q = cfg.quadrature(d)?;
    let p0 = fam.at(theta0)?;
    let t0 = solve_lifted_with(p0.as_ref(), cfg, &q, Init::Auto)?.map;
    let basis = HermiteBasis::new(degree)?;
    let s = solve_derivative(fam, theta0, &t0, &basis, &q)?;
    let grid = t0.grid().clone();
    let mut err = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let solve = |theta: f64| -> Result<TransportMap> {
            let p = fam.at(theta)?;
            Ok(solve_lifted_with(p.as_ref(), cfg, &q, Init::Map(t0.clone()))?.map)
        };
        let (tp, tm) = (solve(theta0 + h)?, solve(theta0 - h)?);
        let dh: Vec<f64> =
            tp.values().iter().zip(tm.values()).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        err.push(s.l2_distance_to_nodes(&grid, &dh)?);
    }
    let slope = log_log_slope(h_list, &err);
    Ok((FdCheck { h: h_list.to_vec(), err, slope }, s))
}

/// Least-squares slope of log y against log x; NaN with fewer than two usable points.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
