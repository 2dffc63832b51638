//! Statistical applications of the stability theory: the Bernstein–von Mises surrogate
//! for mean-field posteriors, robustness of Bayesian linear models, prior swapping,
//! ε-contamination and the mean-field reformulation of distributed stochastic control.

mod bvm;
mod control;
mod robustness;

pub use bvm::{
    bvm_bound_local, bvm_bound_smooth, bvm_linreg, bvm_report, bvm_surrogate, BvMReport,
    LocalCertificate,
};
pub use control::{
    control_potential, control_value, control_value_stability, ControlBound, ControlPotential,
    ControlValue, LinearUtility, NegSoftplusUtility, QuadraticUtility, Utility, UtilityRef,
    ZeroUtility,
};
pub use robustness::{
    contamination_sensitivity, linreg_potential, linreg_tau_bound, prior_swap_interval,
    ContaminationBound, LinRegStability, PriorSwap,
};

use crate::error::{Error, Result};
use crate::transport::{QuantileGrid, TransportMap};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Product Gaussian ⊗ᵢ N(meanᵢ, stdᵢ²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProduct {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl GaussianProduct {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.len() != std.len() {
            return Err(Error::shape(mean.len(), std.len()));
        }
        if mean.is_empty() {
            return Err(Error::Input("gaussian product needs at least one coordinate".into()));
        }
        if let Some(s) = std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Param(format!("std must be positive and finite, got {s}")));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Param("mean must be finite".into()));
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> Vec<f64> {
        self.std.iter().map(|s| s * s).collect()
    }

    /// W₂ distance to another product Gaussian, computed coordinatewise.
    pub fn w2(&self, other: &Self) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::shape(self.dim(), other.dim()));
        }
        let sq: f64 = (0..self.dim())
            .map(|i| (self.mean[i] - other.mean[i]).powi(2) + (self.std[i] - other.std[i]).powi(2))
            .sum();
        Ok(sq.sqrt())
    }

    /// The affine transport map u ↦ mean + std·u on `grid`.
    pub fn to_map(&self, grid: Arc<QuantileGrid>) -> Result<TransportMap> {
        TransportMap::affine(grid, &self.mean, &self.std)
    }
}
