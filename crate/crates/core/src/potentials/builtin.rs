use super::scalar::{sigmoid, softplus, ScalarPotential};
use super::{check_certificates, spd_bounds, symmetric_bounds, Potential, PotentialRef};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// V(x) = ½(x − m)ᵀP(x − m) + offset.
#[derive(Debug, Clone)]
pub struct Quadratic {
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub offset: f64,
    alpha: f64,
    beta: f64,
}

impl Quadratic {
    pub fn new(precision: DMatrix<f64>, mean: DVector<f64>) -> Result<Self> {
        if mean.len() != precision.nrows() {
            return Err(Error::shape(precision.nrows(), mean.len()));
        }
        let (alpha, beta) = spd_bounds(&precision)?;
        Ok(Self { precision, mean, offset: 0.0, alpha, beta })
    }

    /// Isotropic N(mean, σ²I) target.
    pub fn isotropic(d: usize, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::Param(format!("sigma must be positive, got {sigma}")));
        }
        Self::new(DMatrix::identity(d, d) / (sigma * sigma), DVector::zeros(d))
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    /// Replaces the eigenvalue certificates by a looser band [alpha, beta].
    pub fn with_certificates(mut self, alpha: f64, beta: f64) -> Result<Self> {
        check_certificates(alpha, beta)?;
        let tol = 1e-12 * self.beta;
        if alpha > self.alpha + tol || beta < self.beta - tol {
            return Err(Error::Param(format!(
                "band [{alpha}, {beta}] does not contain the spectrum [{}, {}]",
                self.alpha, self.beta
            )));
        }
        self.alpha = alpha;
        self.beta = beta;
        Ok(self)
    }
}

impl Potential for Quadratic {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut q = 0.0;
        for i in 0..d {
            let ri = x[i] - self.mean[i];
            let mut s = 0.5 * self.precision[(i, i)] * ri;
            for j in i + 1..d {
                s += self.precision[(i, j)] * (x[j] - self.mean[j]);
            }
            q += ri * s;
        }
        q + self.offset
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = 0.0;
            for j in 0..d {
                s += self.precision[(i, j)] * (x[j] - self.mean[j]);
            }
            g[i] = s;
        }
    }
    fn hessian_into(&self, _: &[f64], h: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = self.precision[(i, j)];
            }
        }
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        format!("quadratic(d={})", self.dim())
    }
}

/// V(x) = Σᵢ vᵢ(xᵢ) + (τ/2)xᵀAx − τwᵀx, which covers product targets (A = 0)
/// and the Bayesian linear-model posterior.
#[derive(Clone)]
pub struct Separable {
    parts: Vec<Arc<dyn ScalarPotential>>,
    a: DMatrix<f64>,
    w: DVector<f64>,
    tau: f64,
    alpha: f64,
    beta: f64,
}

impl Separable {
    /// Product target V(x) = Σᵢ vᵢ(xᵢ).
    pub fn product(parts: Vec<Arc<dyn ScalarPotential>>) -> Result<Self> {
        let d = parts.len();
        if d == 0 {
            return Err(Error::Input("product potential needs at least one factor".into()));
        }
        let alpha = parts.iter().map(|v| v.alpha()).fold(f64::INFINITY, f64::min);
        let beta = parts.iter().map(|v| v.beta()).fold(0.0, f64::max);
        check_certificates(alpha, beta)?;
        Ok(Self { parts, a: DMatrix::zeros(d, d), w: DVector::zeros(d), tau: 0.0, alpha, beta })
    }

    /// Linear-model posterior with design Gram matrix A, response moment w,
    /// likelihood scale τ and coordinatewise prior v.
    pub fn linreg(
        a: DMatrix<f64>,
        w: DVector<f64>,
        tau: f64,
        prior: Arc<dyn ScalarPotential>,
    ) -> Result<Self> {
        let d = w.len();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::shape(format!("{d}x{d}"), format!("{}x{}", a.nrows(), a.ncols())));
        }
        if !(tau > 0.0) {
            return Err(Error::Param(format!("tau must be positive, got {tau}")));
        }
        let (a1, amax) = symmetric_bounds(&a)?;
        if a1 < -1e-12 * amax.abs().max(1.0) {
            return Err(Error::Param("A must be positive semidefinite".into()));
        }
        let alpha = tau * a1.max(0.0) + prior.alpha();
        let beta = tau * amax + prior.beta();
        if !(alpha > 0.0) {
            return Err(Error::Param(format!(
                "alpha_1*tau + alpha_0 must be positive, got {alpha}"
            )));
        }
        check_certificates(alpha, beta)?;
        Ok(Self { parts: vec![prior; d], a, w, tau, alpha, beta })
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn response(&self) -> &DVector<f64> {
        &self.w
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn factors(&self) -> &[Arc<dyn ScalarPotential>] {
        &self.parts
    }
}

impl Potential for Separable {
    fn dim(&self) -> usize {
        self.parts.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let mut v: f64 = self.parts.iter().zip(x).map(|(p, &xi)| p.value(xi)).sum();
        if self.tau != 0.0 {
            let d = self.dim();
            let mut q = 0.0;
            for i in 0..d {
                let mut s = 0.0;
                for j in 0..d {
                    s += self.a[(i, j)] * x[j];
                }
                q += x[i] * (0.5 * s - self.w[i]);
            }
            v += self.tau * q;
        }
        v
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            let mut s = 0.0;
            if self.tau != 0.0 {
                for j in 0..d {
                    s += self.a[(i, j)] * x[j];
                }
                s = self.tau * (s - self.w[i]);
            }
            g[i] = self.parts[i].d1(x[i]) + s;
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                h[i * d + j] = self.tau * self.a[(i, j)];
            }
            h[i * d + i] += self.parts[i].d2(x[i]);
        }
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        if self.tau == 0.0 {
            format!("product(d={})", self.dim())
        } else {
            format!("linreg(d={}, tau={})", self.dim(), self.tau)
        }
    }
}

/// Ridge-regularized logistic regression:
/// V(β) = s·Σₖ log(1 + exp(−yₖ xₖᵀβ)) + (λ/2)‖β‖², labels yₖ ∈ {−1, +1}.
#[derive(Debug, Clone)]
pub struct Logistic {
    pub features: DMatrix<f64>,
    pub labels: Vec<f64>,
    pub ridge: f64,
    pub scale: f64,
    beta: f64,
}

impl Logistic {
    pub fn new(features: DMatrix<f64>, labels: Vec<f64>, ridge: f64, scale: f64) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(features.nrows(), labels.len()));
        }
        if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::Param("logistic labels must be -1 or +1".into()));
        }
        if !(ridge > 0.0) || !(scale >= 0.0) {
            return Err(Error::Param("ridge must be positive and scale nonnegative".into()));
        }
        let gram = features.transpose() * &features;
        let (_, top) = symmetric_bounds(&gram)?;
        let beta = ridge + scale * top / 4.0;
        Ok(Self { features, labels, ridge, scale, beta })
    }
}

impl Potential for Logistic {
    fn dim(&self) -> usize {
        self.features.ncols()
    }
    fn value(&self, b: &[f64]) -> f64 {
        let d = self.dim();
        let mut v = 0.5 * self.ridge * b.iter().map(|x| x * x).sum::<f64>();
        for (k, &y) in self.labels.iter().enumerate() {
            let z: f64 = (0..d).map(|j| self.features[(k, j)] * b[j]).sum();
            v += self.scale * softplus(-y * z);
        }
        v
    }
    fn grad_into(&self, b: &[f64], g: &mut [f64]) {
        let d = self.dim();
        for j in 0..d {
            g[j] = self.ridge * b[j];
        }
        for (k, &y) in self.labels.iter().enumerate() {
            let z: f64 = (0..d).map(|j| self.features[(k, j)] * b[j]).sum();
            let c = -self.scale * y * sigmoid(-y * z);
            for j in 0..d {
                g[j] += c * self.features[(k, j)];
            }
        }
    }
    fn hessian_into(&self, b: &[f64], h: &mut [f64]) {
        let d = self.dim();
        h.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..d {
            h[j * d + j] = self.ridge;
        }
        for k in 0..self.labels.len() {
            let z: f64 = (0..d).map(|j| self.features[(k, j)] * b[j]).sum();
            let s = sigmoid(z);
            let c = self.scale * s * (1.0 - s);
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += c * self.features[(k, i)] * self.features[(k, j)];
                }
            }
        }
    }
    fn alpha(&self) -> f64 {
        self.ridge
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        format!("logistic(n={}, d={}, ridge={})", self.labels.len(), self.dim(), self.ridge)
    }
}

/// Quadratic plus a smooth coordinatewise perturbation:
/// V(x) = ½(x − m)ᵀP(x − m) + c·Σᵢ log(1 + e^{xᵢ}).
///
/// The Hessian is Lipschitz in operator norm with constant c/(6√3).
#[derive(Debug, Clone)]
pub struct SoftplusPerturbed {
    pub quad: Quadratic,
    pub weight: f64,
}

impl SoftplusPerturbed {
    pub fn new(quad: Quadratic, weight: f64) -> Result<Self> {
        if !(weight >= 0.0) {
            return Err(Error::Param(format!("weight must be nonnegative, got {weight}")));
        }
        Ok(Self { quad, weight })
    }

    /// Lipschitz constant of x ↦ ∇²V(x) in operator norm.
    pub fn hessian_lipschitz(&self) -> f64 {
        self.weight / (6.0 * 3f64.sqrt())
    }
}

impl Potential for SoftplusPerturbed {
    fn dim(&self) -> usize {
        self.quad.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.quad.value(x) + self.weight * x.iter().map(|&v| softplus(v)).sum::<f64>()
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        self.quad.grad_into(x, g);
        for (gi, &xi) in g.iter_mut().zip(x) {
            *gi += self.weight * sigmoid(xi);
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        self.quad.hessian_into(x, h);
        let d = self.dim();
        for i in 0..d {
            let s = sigmoid(x[i]);
            h[i * d + i] += self.weight * s * (1.0 - s);
        }
    }
    fn alpha(&self) -> f64 {
        self.quad.alpha()
    }
    fn beta(&self) -> f64 {
        self.quad.beta() + self.weight / 4.0
    }
    fn label(&self) -> String {
        format!("softplus_perturbed(d={}, weight={})", self.dim(), self.weight)
    }
}

/// x ↦ factor·V(x), e.g. the n-observation posterior n·fₙ.
#[derive(Clone)]
pub struct Scaled {
    pub inner: PotentialRef,
    pub factor: f64,
}

impl Scaled {
    pub fn new(inner: PotentialRef, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::Param(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self { inner, factor })
    }
}

impl Potential for Scaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.factor * self.inner.value(x)
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        self.inner.grad_into(x, g);
        g.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        self.inner.hessian_into(x, h);
        h.iter_mut().for_each(|v| *v *= self.factor);
    }
    fn alpha(&self) -> f64 {
        self.factor * self.inner.alpha()
    }
    fn beta(&self) -> f64 {
        self.factor * self.inner.beta()
    }
    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.inner.label())
    }
}

/// Gaussian likelihood with an ε-contaminated prior
/// p_ε = (1 − ε)N(0, I) + εN(μ, I):
/// V(x) = ½(x − m)ᵀΛ(x − m) − log p_ε(x).
#[derive(Debug, Clone)]
pub struct Contaminated {
    pub likelihood: Quadratic,
    pub mu: DVector<f64>,
    pub eps: f64,
    alpha: f64,
    beta: f64,
}

impl Contaminated {
    pub fn new(likelihood: Quadratic, mu: DVector<f64>, eps: f64) -> Result<Self> {
        if mu.len() != likelihood.dim() {
            return Err(Error::shape(likelihood.dim(), mu.len()));
        }
        if !(0.0..1.0).contains(&eps) {
            return Err(Error::Param(format!("eps must lie in [0, 1), got {eps}")));
        }
        let alpha = likelihood.alpha() + Self::prior_alpha(&mu);
        let beta = likelihood.beta() + 1.0;
        check_certificates(alpha, beta)?;
        Ok(Self { likelihood, mu, eps, alpha, beta })
    }

    /// Certified convexity 1 − ‖μ‖²/4 of −log p_ε, uniform in ε.
    pub fn prior_alpha(mu: &DVector<f64>) -> f64 {
        1.0 - mu.norm_squared() / 4.0
    }

    /// log N(x; 0, I) and log N(x; μ, I) without the shared normalizer.
    pub fn log_components(&self, x: &[f64]) -> (f64, f64) {
        let lp = -0.5 * x.iter().map(|v| v * v).sum::<f64>();
        let lq = -0.5 * x.iter().zip(self.mu.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        (lp, lq)
    }

    /// log p_ε(x) and the posterior weight r = εq/p_ε of the contaminating component.
    pub fn log_mixture(&self, x: &[f64]) -> (f64, f64) {
        let (lp, lq) = self.log_components(x);
        if self.eps == 0.0 {
            return (lp, 0.0);
        }
        let a = (1.0 - self.eps).ln() + lp;
        let b = self.eps.ln() + lq;
        let m = a.max(b);
        let lse = m + ((a - m).exp() + (b - m).exp()).ln();
        (lse, (b - lse).exp())
    }
}

impl Potential for Contaminated {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.likelihood.value(x) - self.log_mixture(x).0
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        self.likelihood.grad_into(x, g);
        let r = self.log_mixture(x).1;
        for i in 0..g.len() {
            g[i] += x[i] - r * self.mu[i];
        }
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        self.likelihood.hessian_into(x, h);
        let r = self.log_mixture(x).1;
        let d = self.dim();
        for i in 0..d {
            h[i * d + i] += 1.0;
            for j in 0..d {
                h[i * d + j] -= r * (1.0 - r) * self.mu[i] * self.mu[j];
            }
        }
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        format!("contaminated(d={}, eps={})", self.dim(), self.eps)
    }
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type VecFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// User potential from closures with user-supplied certificates.
pub struct FnPotential {
    dim: usize,
    value: Box<ValueFn>,
    grad: Box<VecFn>,
    hessian: Box<VecFn>,
    alpha: f64,
    beta: f64,
    label: String,
}

impl FnPotential {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        alpha: f64,
        beta: f64,
        label: impl Into<String>,
    ) -> Result<Self> {
        check_certificates(alpha, beta)?;
        Ok(Self {
            dim,
            value: Box::new(value),
            grad: Box::new(grad),
            hessian: Box::new(hessian),
            alpha,
            beta,
            label: label.into(),
        })
    }
}

impl Potential for FnPotential {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        (self.grad)(x, g)
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        (self.hessian)(x, h)
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}
