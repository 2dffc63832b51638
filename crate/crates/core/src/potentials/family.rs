use super::builtin::{Contaminated, Quadratic, Separable};
use super::scalar::ScalarPotential;
use super::{check_certificates, spd_bounds, symmetric_bounds, Potential, PotentialRef};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// θ ↦ V_θ over an open interval Θ with convexity band uniform in θ.
pub trait ParametricFamily: Send + Sync {
    fn dim(&self) -> usize;
    fn theta_domain(&self) -> (f64, f64);
    fn at(&self, theta: f64) -> Result<PotentialRef>;
    fn alpha(&self) -> f64;
    fn beta(&self) -> f64;
    fn label(&self) -> String;

    /// ∂θ∇V_θ(x); defaults to a central difference in θ.
    fn grad_theta_grad(&self, theta: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        fd_grad_theta_grad(self, theta, x, out)
    }

    /// Lipschitz constant of x ↦ ∂θ∇V_θ(x), when known.
    fn lipschitz_dtheta(&self) -> Option<f64> {
        None
    }

    fn check_theta(&self, theta: f64) -> Result<()> {
        let (lo, hi) = self.theta_domain();
        if theta > lo && theta < hi {
            Ok(())
        } else {
            Err(Error::Domain(format!("theta = {theta} outside ({lo}, {hi})")))
        }
    }
}

/// Central difference (∇V_{θ+h} − ∇V_{θ−h})/(2h) with h = 1e−4·max(1, |θ|).
pub fn fd_grad_theta_grad<F: ParametricFamily + ?Sized>(
    fam: &F,
    theta: f64,
    x: &[f64],
    out: &mut [f64],
) -> Result<()> {
    let h = 1e-4 * theta.abs().max(1.0);
    let gp = fam.at(theta + h)?.grad(x);
    let gm = fam.at(theta - h)?.grad(x);
    for i in 0..out.len() {
        out[i] = (gp[i] - gm[i]) / (2.0 * h);
    }
    Ok(())
}

fn check_domain(lo: f64, hi: f64) -> Result<()> {
    if lo < hi {
        Ok(())
    } else {
        Err(Error::Param(format!("empty theta domain ({lo}, {hi})")))
    }
}

/// V_θ(x) = ½(x − m − θe)ᵀP(x − m − θe).
#[derive(Debug, Clone)]
pub struct GaussianMeanShift {
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub direction: DVector<f64>,
    pub domain: (f64, f64),
    alpha: f64,
    beta: f64,
}

impl GaussianMeanShift {
    pub fn new(
        precision: DMatrix<f64>,
        mean: DVector<f64>,
        direction: DVector<f64>,
        domain: (f64, f64),
    ) -> Result<Self> {
        let d = precision.nrows();
        if mean.len() != d || direction.len() != d {
            return Err(Error::shape(d, format!("{} / {}", mean.len(), direction.len())));
        }
        check_domain(domain.0, domain.1)?;
        let (alpha, beta) = spd_bounds(&precision)?;
        Ok(Self { precision, mean, direction, domain, alpha, beta })
    }
}

impl ParametricFamily for GaussianMeanShift {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn theta_domain(&self) -> (f64, f64) {
        self.domain
    }
    fn at(&self, theta: f64) -> Result<PotentialRef> {
        self.check_theta(theta)?;
        let m = &self.mean + theta * &self.direction;
        Ok(Arc::new(Quadratic::new(self.precision.clone(), m)?))
    }
    fn grad_theta_grad(&self, _: f64, _: &[f64], out: &mut [f64]) -> Result<()> {
        let v = -(&self.precision * &self.direction);
        out.copy_from_slice(v.as_slice());
        Ok(())
    }
    fn lipschitz_dtheta(&self) -> Option<f64> {
        Some(0.0)
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        format!("gaussian_mean_shift(d={})", self.dim())
    }
}

/// V_θ(x) = (θ/2)(x − m)ᵀP(x − m) for θ in (lo, hi) with lo > 0; certificates
/// α = lo·λmin(P), β = hi·λmax(P).
#[derive(Debug, Clone)]
pub struct GaussianPrecisionScale {
    pub precision: DMatrix<f64>,
    pub mean: DVector<f64>,
    pub domain: (f64, f64),
    spectrum: (f64, f64),
}

impl GaussianPrecisionScale {
    pub fn new(precision: DMatrix<f64>, mean: DVector<f64>, domain: (f64, f64)) -> Result<Self> {
        if mean.len() != precision.nrows() {
            return Err(Error::shape(precision.nrows(), mean.len()));
        }
        check_domain(domain.0, domain.1)?;
        if !(domain.0 > 0.0) || !domain.1.is_finite() {
            return Err(Error::Param("precision-scale domain must lie in (0, inf)".into()));
        }
        let spectrum = spd_bounds(&precision)?;
        Ok(Self { precision, mean, domain, spectrum })
    }
}

impl ParametricFamily for GaussianPrecisionScale {
    fn dim(&self) -> usize {
        self.mean.len()
    }
    fn theta_domain(&self) -> (f64, f64) {
        self.domain
    }
    fn at(&self, theta: f64) -> Result<PotentialRef> {
        self.check_theta(theta)?;
        let q = Quadratic::new(theta * &self.precision, self.mean.clone())?
            .with_certificates(self.alpha(), self.beta())?;
        Ok(Arc::new(q))
    }
    fn grad_theta_grad(&self, _: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        out.copy_from_slice((&self.precision * r).as_slice());
        Ok(())
    }
    fn lipschitz_dtheta(&self) -> Option<f64> {
        Some(self.spectrum.1)
    }
    fn alpha(&self) -> f64 {
        self.domain.0 * self.spectrum.0
    }
    fn beta(&self) -> f64 {
        self.domain.1 * self.spectrum.1
    }
    fn label(&self) -> String {
        format!("gaussian_precision_scale(d={})", self.dim())
    }
}

/// Linear-model posterior indexed by the likelihood scale τ.
#[derive(Clone)]
pub struct LinRegTau {
    pub a: DMatrix<f64>,
    pub w: DVector<f64>,
    pub prior: Arc<dyn ScalarPotential>,
    pub domain: (f64, f64),
    spectrum: (f64, f64),
}

impl LinRegTau {
    pub fn new(
        a: DMatrix<f64>,
        w: DVector<f64>,
        prior: Arc<dyn ScalarPotential>,
        domain: (f64, f64),
    ) -> Result<Self> {
        check_domain(domain.0, domain.1)?;
        if !(domain.0 >= 0.0) || !domain.1.is_finite() {
            return Err(Error::Param("tau domain must lie in [0, inf)".into()));
        }
        if a.nrows() != w.len() {
            return Err(Error::shape(w.len(), a.nrows()));
        }
        let spectrum = symmetric_bounds(&a)?;
        let out = Self { a, w, prior, domain, spectrum };
        check_certificates(out.alpha(), out.beta())?;
        Ok(out)
    }
}

impl ParametricFamily for LinRegTau {
    fn dim(&self) -> usize {
        self.w.len()
    }
    fn theta_domain(&self) -> (f64, f64) {
        self.domain
    }
    fn at(&self, tau: f64) -> Result<PotentialRef> {
        self.check_theta(tau)?;
        Ok(Arc::new(UniformBand {
            inner: Separable::linreg(self.a.clone(), self.w.clone(), tau, self.prior.clone())?,
            alpha: self.alpha(),
            beta: self.beta(),
        }))
    }
    fn grad_theta_grad(&self, _: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let b = DVector::from_column_slice(x);
        out.copy_from_slice((&self.a * b - &self.w).as_slice());
        Ok(())
    }
    fn lipschitz_dtheta(&self) -> Option<f64> {
        Some(self.spectrum.1)
    }
    fn alpha(&self) -> f64 {
        self.domain.0 * self.spectrum.0.max(0.0) + self.prior.alpha()
    }
    fn beta(&self) -> f64 {
        self.domain.1 * self.spectrum.1 + self.prior.beta()
    }
    fn label(&self) -> String {
        format!("linreg_tau(d={})", self.dim())
    }
}

/// Contaminated-prior posterior indexed by the contamination level ε ∈ [0, 1).
#[derive(Debug, Clone)]
pub struct ContaminationPath {
    pub likelihood: Quadratic,
    pub mu: DVector<f64>,
    pub domain: (f64, f64),
}

impl ContaminationPath {
    pub fn new(likelihood: Quadratic, mu: DVector<f64>, domain: (f64, f64)) -> Result<Self> {
        check_domain(domain.0, domain.1)?;
        if domain.0 < 0.0 || domain.1 > 1.0 {
            return Err(Error::Param("contamination domain must lie in [0, 1]".into()));
        }
        Contaminated::new(likelihood.clone(), mu.clone(), 0.0)?;
        Ok(Self { likelihood, mu, domain })
    }
}

impl ParametricFamily for ContaminationPath {
    fn dim(&self) -> usize {
        self.mu.len()
    }
    fn theta_domain(&self) -> (f64, f64) {
        self.domain
    }
    /// The left endpoint is admissible: ε = 0 is the uncontaminated prior.
    fn check_theta(&self, eps: f64) -> Result<()> {
        let (lo, hi) = self.domain;
        if eps >= lo && eps < hi {
            Ok(())
        } else {
            Err(Error::Domain(format!("eps = {eps} outside [{lo}, {hi})")))
        }
    }
    fn at(&self, eps: f64) -> Result<PotentialRef> {
        self.check_theta(eps)?;
        Ok(Arc::new(Contaminated::new(self.likelihood.clone(), self.mu.clone(), eps)?))
    }
    fn grad_theta_grad(&self, eps: f64, x: &[f64], out: &mut [f64]) -> Result<()> {
        let c = Contaminated::new(self.likelihood.clone(), self.mu.clone(), eps)?;
        let (lp, lq) = c.log_components(x);
        let (lpe, _) = c.log_mixture(x);
        let dr = (lp + lq - 2.0 * lpe).exp();
        for i in 0..out.len() {
            out[i] = -dr * self.mu[i];
        }
        Ok(())
    }
    fn alpha(&self) -> f64 {
        self.likelihood.alpha() + Contaminated::prior_alpha(&self.mu)
    }
    fn beta(&self) -> f64 {
        self.likelihood.beta() + 1.0
    }
    fn label(&self) -> String {
        format!("contamination_path(d={})", self.dim())
    }
}

/// Wraps a potential with a wider certified band.
struct UniformBand<P> {
    inner: P,
    alpha: f64,
    beta: f64,
}

impl<P: Potential> Potential for UniformBand<P> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }
    fn grad_into(&self, x: &[f64], g: &mut [f64]) {
        self.inner.grad_into(x, g)
    }
    fn hessian_into(&self, x: &[f64], h: &mut [f64]) {
        self.inner.hessian_into(x, h)
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn label(&self) -> String {
        self.inner.label()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    GaussianMeanShift,
    GaussianPrecisionScale,
    LinregTau,
    ContaminationPath,
}

impl std::str::FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_mean_shift" => Ok(Self::GaussianMeanShift),
            "gaussian_precision_scale" => Ok(Self::GaussianPrecisionScale),
            "linreg_tau" => Ok(Self::LinregTau),
            "contamination_path" => Ok(Self::ContaminationPath),
            other => Err(Error::Param(format!("unknown family kind '{other}'"))),
        }
    }
}

/// Parameters for [`builtin_family`]. Matrices are row-major.
#[derive(Clone, Default)]
pub struct FamilyParams {
    /// Precision P (mean-shift, precision-scale), Gram A (linreg) or likelihood precision Λ.
    pub matrix: Vec<f64>,
    /// Base mean (Gaussian families), response moment w (linreg) or likelihood mean.
    pub vector: Vec<f64>,
    /// Mean-shift direction or contaminating mean μ.
    pub direction: Vec<f64>,
    pub domain: (f64, f64),
    pub prior: Option<Arc<dyn ScalarPotential>>,
}

pub fn builtin_family(kind: FamilyKind, params: FamilyParams) -> Result<Arc<dyn ParametricFamily>> {
    let d = params.vector.len();
    if params.matrix.len() != d * d {
        return Err(Error::shape(d * d, params.matrix.len()));
    }
    let m = DMatrix::from_row_slice(d, d, &params.matrix);
    let v = DVector::from_vec(params.vector);
    Ok(match kind {
        FamilyKind::GaussianMeanShift => Arc::new(GaussianMeanShift::new(
            m,
            v,
            DVector::from_vec(params.direction),
            params.domain,
        )?),
        FamilyKind::GaussianPrecisionScale => {
            Arc::new(GaussianPrecisionScale::new(m, v, params.domain)?)
        }
        FamilyKind::LinregTau => {
            let prior = params
                .prior
                .ok_or_else(|| Error::Param("linreg_tau needs a prior".into()))?;
            Arc::new(LinRegTau::new(m, v, prior, params.domain)?)
        }
        FamilyKind::ContaminationPath => Arc::new(ContaminationPath::new(
            Quadratic::new(m, v)?,
            DVector::from_vec(params.direction),
            params.domain,
        )?),
    })
}
