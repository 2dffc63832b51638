//! Mean-field reformulation of distributed stochastic control. For a concave utility
//! g and horizon T, the optimal value is M(g) = sup_μ ∫g dμ − KL(μ‖γ_T) over product
//! measures μ, with γ_T = N(0, T·I). Its maximizer is the mean-field optimizer of
//! V(x) = −g(x) + ‖x‖²/(2T).

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::potentials::{symmetric_bounds, Potential};
use crate::solver::{solve_lifted, LiftedSolution, SolverConfig};
use crate::transport::PointSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// A concave, β-smooth terminal utility g.
pub trait Utility: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn grad_into(&self, x: &[f64], g: &mut [f64]);
    /// Row-major Hessian of g (negative semidefinite).
    fn hessian_into(&self, x: &[f64], h: &mut [f64]);
    /// Smoothness constant: −∇²g ⪯ β I.
    fn beta(&self) -> f64;
    fn label(&self) -> String;
}

pub type UtilityRef = Arc<dyn Utility>;

/// g ≡ 0.
#[derive(Debug, Clone)]
pub struct ZeroUtility {
    pub d: usize,
}

impl Utility for ZeroUtility {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }
    fn grad_into(&self, _: &[f64], g: &mut [f64]) {
        g.fill(0.0);
    }
    fn hessian_into(&self, _: &[f64], h: &mut [f64]) {
        h.fill(0.0);
    }
    fn beta(&self) -> f64 {
        0.0
    }
    fn label(&self) -> String {
        format!("zero(d={})", self.d)
    }
}

/// g(x) = ⟨c, x⟩.
#[derive(Debug, Clone)]
pub struct LinearUtility {
    pub c: Vec<f64>,
}

impl LinearUtility {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("linear utility needs a finite, nonempty vector".into()));
        }
        Ok(Self { c })
    }
}

impl Utility for LinearUtility {
    fn dim(&self) -> usize {
        self.c.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }
    fn grad_into(&self, _: &[f64], g: &mut [f64]) {
        g.copy_from_slice(&self.c);
    }
    fn hessian_into(&self, _: &[f64], h: &mut [f64]) {
        h.fill(0.0);
    }
    fn beta(&self) -> f64 {
        0.0
    }
    fn label(&self) -> String {
        format!("linear(d={})", self.c.len())
    }
}

/// g(x) = −½(x − m)ᵀQ(x − m) with Q positive semidefinite.
#[derive(Debug, Clone)]
pub struct QuadraticUtility {
    q: DMatrix<f64>,
    center: DVector<f64>,
    beta: f64,
}

impl QuadraticUtility {
    pub fn new(q: DMatrix<f64>, center: DVector<f64>) -> Result<Self> {
        if q.nrows() != center.len() {
            return Err(Error::shape(center.len(), q.nrows()));
        }
        let (lo, hi) = symmetric_bounds(&q)?;
        if lo < -1e-12 * hi.abs().max(1.0) {
            return Err(Error::Param("quadratic utility must be concave (Q positive semidefinite)".into()));
        }
        Ok(Self { q, center, beta: hi.max(0.0) })
    }
}

impl Utility for QuadraticUtility {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let r = DVector::from_column_slice(x) - &self.center;
        -0.5 * r.dot(&(&self.q * &r))
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        let r = DVector::from_column_slice(x) - &self.center;
        let qr = &self.q * r;
        g.iter_mut().zip(qr.iter()).for_each(|(g, v)| *g = -v);
    }
    fn hessian_into(&self, _: &[f64], h: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = -self.q[(i, j)];
            }
        }
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        format!("quadratic(d={})", self.dim())
    }
}

/// g(x) = −w·Σᵢ log(1 + e^{xᵢ}), a non-Gaussian concave utility with β = w/4.
#[derive(Debug, Clone)]
pub struct NegSoftplusUtility {
    pub d: usize,
    pub weight: f64,
}

impl NegSoftplusUtility {
    pub fn new(d: usize, weight: f64) -> Result<Self> {
        if d == 0 || !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::Param(format!("need d > 0 and weight >= 0, got d={d}, weight={weight}")));
        }
        Ok(Self { d, weight })
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Utility for NegSoftplusUtility {
    fn dim(&self) -> usize {
        self.d
    }
    fn value(&self, x: &[f64]) -> f64 {
        -self.weight * x.iter().map(|v| softplus(*v)).sum::<f64>()
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().zip(x).for_each(|(g, x)| *g = -self.weight * sigmoid(*x));
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        h.fill(0.0);
        for (i, xi) in x.iter().enumerate() {
            let s = sigmoid(*xi);
            h[i * self.d + i] = -self.weight * s * (1.0 - s);
        }
    }
    fn beta(&self) -> f64 {
        self.weight / 4.0
    }
    fn label(&self) -> String {
        format!("neg_softplus(d={}, weight={})", self.d, self.weight)
    }
}

/// V(x) = −g(x) + ‖x‖²/(2T) with α = 1/T and β = β_g + 1/T.
#[derive(Clone)]
pub struct ControlPotential {
    pub utility: UtilityRef,
    pub horizon: f64,
}

pub fn control_potential(g: UtilityRef, horizon: f64) -> Result<ControlPotential> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Param(format!("horizon must be positive, got {horizon}")));
    }
    if !(g.beta() >= 0.0 && g.beta().is_finite()) {
        return Err(Error::Param(format!("utility smoothness must be nonnegative, got {}", g.beta())));
    }
    Ok(ControlPotential { utility: g, horizon })
}

impl Potential for ControlPotential {
    fn dim(&self) -> usize {
        self.utility.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        -self.utility.value(x) + x.iter().map(|v| v * v).sum::<f64>() / (2.0 * self.horizon)
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        self.utility.grad_into(x, g);
        g.iter_mut().zip(x).for_each(|(g, x)| *g = -*g + x / self.horizon);
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        let d = self.dim();
        self.utility.hessian_into(x, h);
        h.iter_mut().for_each(|v| *v = -*v);
        for i in 0..d {
            h[i * d + i] += 1.0 / self.horizon;
        }
    }
    fn alpha(&self) -> f64 {
        1.0 / self.horizon
    }
    fn beta(&self) -> f64 {
        self.utility.beta() + 1.0 / self.horizon
    }
    fn label(&self) -> String {
        format!("control({}, T={})", self.utility.label(), self.horizon)
    }
}

/// Optimal mean-field control value and the optimizer that attains it.
#[derive(Debug, Clone)]
pub struct ControlValue {
    /// M(g) = max ELBO of V − (d/2)log(2πT).
    pub value: f64,
    pub solution: LiftedSolution,
}

/// Solves the mean-field problem for V = −g + ‖x‖²/(2T) and converts the maximal
/// ELBO into M(g). M(0) = 0 and M(⟨c, ·⟩) = T‖c‖²/2.
pub fn control_value(g: UtilityRef, horizon: f64, cfg: &SolverConfig) -> Result<ControlValue> {
    let v = control_potential(g, horizon)?;
    let d = v.dim() as f64;
    let solution = solve_lifted(&v, cfg)?;
    Ok(ControlValue { value: solution.elbo - 0.5 * d * (2.0 * PI * horizon).ln(), solution })
}

/// Value-stability bound for a pair of utilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBound {
    /// 2√((βT² + T)d)·G + (βT² + T)G²/2 + ‖g̃ − g‖.
    pub bound: f64,
    /// G = ‖∇g̃ − ∇g‖ in L² of the samples.
    pub grad_diff_l2: f64,
    pub value_diff_l2: f64,
    /// Mean of g̃ − g over the samples.
    pub value_diff_mean: f64,
    pub beta: f64,
    pub horizon: f64,
}

/// |M(g̃) − M(g)| ≤ 2√((βT² + T)d)‖∇g̃ − ∇g‖ + (βT² + T)‖∇g̃ − ∇g‖²/2 + ‖g̃ − g‖ with
/// norms in L² of `samples`, drawn from the mean-field optimizer of either utility.
pub fn control_value_stability(
    g: &dyn Utility,
    g_tilde: &dyn Utility,
    beta: f64,
    horizon: f64,
    samples: &PointSet,
) -> Result<ControlBound> {
    samples.require_nonempty("control bound")?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Param(format!("horizon must be positive, got {horizon}")));
    }
    let needed = g.beta().max(g_tilde.beta());
    if !(beta >= needed && beta.is_finite()) {
        return Err(Error::Param(format!("beta must be at least the utilities' smoothness {needed}, got {beta}")));
    }
    let d = g.dim();
    if g_tilde.dim() != d {
        return Err(Error::shape(d, g_tilde.dim()));
    }
    if samples.dim() != d {
        return Err(Error::shape(d, samples.dim()));
    }
    let (mut a, mut b) = (vec![0.0; d], vec![0.0; d]);
    let n = samples.len();
    let (mut sq_g, mut diff) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for x in samples.rows() {
        g.grad_into(x, &mut a);
        g_tilde.grad_into(x, &mut b);
        sq_g.push(a.iter().zip(&b).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        diff.push(g_tilde.value(x) - g.value(x));
    }
    let sq_v: Vec<f64> = diff.iter().map(|v| v * v).collect();
    let nf = n as f64;
    let gd = (pairwise_sum(&sq_g) / nf).sqrt();
    let vd = (pairwise_sum(&sq_v) / nf).sqrt();
    let k = beta * horizon * horizon + horizon;
    let bound = 2.0 * (k * d as f64).sqrt() * gd + 0.5 * k * gd * gd + vd;
    if !bound.is_finite() {
        return Err(Error::Eval("control bound is not finite".into()));
    }
    Ok(ControlBound {
        bound,
        grad_diff_l2: gd,
        value_diff_l2: vd,
        value_diff_mean: pairwise_sum(&diff) / nf,
        beta,
        horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_potential_certificates() {
        let g: UtilityRef = Arc::new(NegSoftplusUtility::new(2, 2.0).unwrap());
        let v = control_potential(g, 0.5).unwrap();
        assert_eq!(v.alpha(), 2.0);
        assert_eq!(v.beta(), 2.5);
        let (e1, e2) = crate::potentials::derivative_discrepancy(&v, &[0.3, -0.7], 1e-5);
        assert!(e1 < 1e-8 && e2 < 1e-8);
        assert!(crate::potentials::spd_bounds(&v.hessian(&[0.3, -0.7])).is_ok());
    }
}
