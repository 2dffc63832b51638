use super::check_certificates;
use crate::error::Result;

/// A one-dimensional convex potential v, used for coordinatewise priors.
pub trait ScalarPotential: Send + Sync {
    fn value(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    /// Lower bound on v″ (may be zero or negative for priors that only need
    /// α₁τ + α₀ > 0 overall).
    fn alpha(&self) -> f64;
    /// Upper bound on v″.
    fn beta(&self) -> f64;
    fn label(&self) -> String;
}

/// v(x) = (λ/2)(x − c)².
#[derive(Debug, Clone)]
pub struct GaussianScalar {
    pub precision: f64,
    pub mean: f64,
}

impl GaussianScalar {
    pub fn new(precision: f64, mean: f64) -> Result<Self> {
        check_certificates(precision, precision)?;
        Ok(Self { precision, mean })
    }
}

impl ScalarPotential for GaussianScalar {
    fn value(&self, x: f64) -> f64 {
        0.5 * self.precision * (x - self.mean).powi(2)
    }
    fn d1(&self, x: f64) -> f64 {
        self.precision * (x - self.mean)
    }
    fn d2(&self, _: f64) -> f64 {
        self.precision
    }
    fn alpha(&self) -> f64 {
        self.precision
    }
    fn beta(&self) -> f64 {
        self.precision
    }
    fn label(&self) -> String {
        format!("gaussian_scalar(prec={}, mean={})", self.precision, self.mean)
    }
}

/// v(x) = (κ/2)x² + w·log(1 + eˣ), a smooth non-Gaussian convex prior.
#[derive(Debug, Clone)]
pub struct SoftplusQuadratic {
    pub kappa: f64,
    pub weight: f64,
}

impl SoftplusQuadratic {
    pub fn new(kappa: f64, weight: f64) -> Result<Self> {
        check_certificates(kappa, kappa + weight.max(0.0) / 4.0)?;
        if weight < 0.0 {
            return Err(crate::Error::Param("softplus weight must be nonnegative".into()));
        }
        Ok(Self { kappa, weight })
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl ScalarPotential for SoftplusQuadratic {
    fn value(&self, x: f64) -> f64 {
        0.5 * self.kappa * x * x + self.weight * softplus(x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.kappa * x + self.weight * sigmoid(x)
    }
    fn d2(&self, x: f64) -> f64 {
        let s = sigmoid(x);
        self.kappa + self.weight * s * (1.0 - s)
    }
    fn alpha(&self) -> f64 {
        self.kappa
    }
    fn beta(&self) -> f64 {
        self.kappa + self.weight / 4.0
    }
    fn label(&self) -> String {
        format!("softplus_quadratic(kappa={}, weight={})", self.kappa, self.weight)
    }
}
