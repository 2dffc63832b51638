//! Robustness of mean-field posteriors: likelihood-scale perturbations of the linear
//! model, prior swapping and ε-contamination of the prior.

use crate::error::{Error, Result};
use crate::numerics::pairwise_sum;
use crate::potentials::{Potential, ScalarPotential, Separable};
use crate::stability::grad_diff_l2;
use crate::transport::PointSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// V_τ(β) = Σᵢ v(βᵢ) + (τ/2)βᵀAβ − τwᵀβ with α = τα₁ + α₀ and β = τλ_max(A) + b₀.
pub fn linreg_potential(
    a: DMatrix<f64>,
    w: DVector<f64>,
    tau: f64,
    prior: Arc<dyn ScalarPotential>,
) -> Result<Separable> {
    Separable::linreg(a, w, tau, prior)
}

/// W₂ bound between the linear-model posteriors at likelihood scales τ and τ̂.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRegStability {
    pub bound: f64,
    /// ‖Aβ − w‖ in L² of the samples of the τ̂ posterior.
    pub residual_l2: f64,
    /// α₁τ + α₀.
    pub alpha: f64,
    pub tau: f64,
    pub tau_hat: f64,
}

/// W₂(ν*_τ̂, ν*_τ) ≤ ‖Aβ − w‖_{L²(ν*_τ̂)}·|τ̂ − τ|/(α₁τ + α₀), with `samples_hat`
/// drawn from the mean-field optimizer at τ̂.
pub fn linreg_tau_bound(
    a: &DMatrix<f64>,
    w: &DVector<f64>,
    tau: f64,
    tau_hat: f64,
    prior: Arc<dyn ScalarPotential>,
    samples_hat: &PointSet,
) -> Result<LinRegStability> {
    samples_hat.require_nonempty("linear-model bound")?;
    if !(tau_hat > 0.0 && tau_hat.is_finite()) {
        return Err(Error::Param(format!("tau_hat must be positive, got {tau_hat}")));
    }
    let v = linreg_potential(a.clone(), w.clone(), tau, prior)?;
    let d = v.dim();
    if samples_hat.dim() != d {
        return Err(Error::shape(d, samples_hat.dim()));
    }
    let sq: Vec<f64> = samples_hat
        .rows()
        .map(|x| (a * DVector::from_column_slice(x) - w).norm_squared())
        .collect();
    let residual_l2 = (pairwise_sum(&sq) / sq.len() as f64).sqrt();
    let alpha = v.alpha();
    Ok(LinRegStability {
        bound: residual_l2 * (tau_hat - tau).abs() / alpha,
        residual_l2,
        alpha,
        tau,
        tau_hat,
    })
}

/// Uncertainty region for a Lipschitz statistic when the prior p is swapped for p̃.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSwap {
    /// δ = ℓ·‖∇log p̃ − ∇log p‖_{L²(ν̃*)}/(α_{n,d} + α̃_d).
    pub delta: f64,
    pub grad_diff_l2: f64,
    pub ell: f64,
    /// α_{n,d} + α̃_d.
    pub concavity: f64,
    /// Sample mean of the statistic under ν̃*.
    pub statistic_mean: Option<f64>,
    /// [mean − δ, mean + δ], which contains the statistic's mean under ν*.
    pub interval: Option<(f64, f64)>,
}

/// Real-valued statistic of a parameter vector.
pub type Statistic<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Prior-swapping bound. `prior` and `prior_tilde` are the negative log-priors
/// −log p and −log p̃; `samples_tilde` are drawn from the mean-field optimizer ν̃*
/// under p̃; `statistic` is an ℓ-Lipschitz function whose ν̃* mean is estimated.
pub fn prior_swap_interval(
    ell: f64,
    prior: &dyn Potential,
    prior_tilde: &dyn Potential,
    samples_tilde: &PointSet,
    alpha_nd: f64,
    alpha_d: f64,
    statistic: Option<Statistic<'_>>,
) -> Result<PriorSwap> {
    if !(ell >= 0.0 && ell.is_finite()) {
        return Err(Error::Param(format!("ell must be nonnegative, got {ell}")));
    }
    let concavity = alpha_nd + alpha_d;
    if !(concavity > 0.0 && concavity.is_finite()) {
        return Err(Error::Param(format!("alpha_nd + alpha_d must be positive, got {concavity}")));
    }
    let g = grad_diff_l2(prior, prior_tilde, samples_tilde)?;
    let delta = ell * g / concavity;
    let statistic_mean = statistic.map(|phi| {
        let v: Vec<f64> = samples_tilde.rows().map(phi).collect();
        pairwise_sum(&v) / v.len() as f64
    });
    if statistic_mean.is_some_and(|m| !m.is_finite()) {
        return Err(Error::Eval("statistic mean is not finite".into()));
    }
    Ok(PriorSwap {
        delta,
        grad_diff_l2: g,
        ell,
        concavity,
        statistic_mean,
        interval: statistic_mean.map(|m| (m - delta, m + delta)),
    })
}

/// ε-contamination bound and its weighted gradient norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationBound {
    pub bound: f64,
    /// ‖(q/p_ε)(∇log q − ∇log p)‖_{L²(ν*)}.
    pub weighted_grad_l2: f64,
    pub eps: f64,
    /// α_{n,d} + α_ε.
    pub concavity: f64,
}

/// W₂(ν_ε*, ν*) ≤ ε‖(q/p_ε)(∇log q − ∇log p)‖_{L²(ν*)}/(α_{n,d} + α_ε) for the prior
/// p_ε = (1 − ε)p + εq.
///
/// `p_ref` and `q_perturb` are normalized negative log-densities −log p and −log q.
/// The ratio q/p_ε = 1/((1 − ε)e^{log p − log q} + ε) is evaluated in log space.
pub fn contamination_sensitivity(
    p_ref: &dyn Potential,
    q_perturb: &dyn Potential,
    eps: f64,
    samples: &PointSet,
    alpha_nd: f64,
    alpha_eps: f64,
) -> Result<ContaminationBound> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Param(format!("eps must lie in [0, 1], got {eps}")));
    }
    let concavity = alpha_nd + alpha_eps;
    if !(concavity > 0.0 && concavity.is_finite()) {
        return Err(Error::Param(format!("alpha_nd + alpha_eps must be positive, got {concavity}")));
    }
    samples.require_nonempty("contamination bound")?;
    let d = p_ref.dim();
    if q_perturb.dim() != d {
        return Err(Error::shape(d, q_perturb.dim()));
    }
    if samples.dim() != d {
        return Err(Error::shape(d, samples.dim()));
    }
    let (mut gp, mut gq) = (vec![0.0; d], vec![0.0; d]);
    let sq: Vec<f64> = samples
        .rows()
        .map(|x| {
            p_ref.grad_into(x, &mut gp);
            q_perturb.grad_into(x, &mut gq);
            let diff: f64 = gp.iter().zip(&gq).map(|(a, b)| (a - b) * (a - b)).sum();
            if diff == 0.0 {
                return 0.0;
            }
            // log p − log q = V_q − V_p.
            let lr = q_perturb.value(x) - p_ref.value(x);
            let ratio = 1.0 / ((1.0 - eps) * lr.exp() + eps);
            ratio * ratio * diff
        })
        .collect();
    let weighted_grad_l2 = (pairwise_sum(&sq) / sq.len() as f64).sqrt();
    if eps == 0.0 {
        return Ok(ContaminationBound { bound: 0.0, weighted_grad_l2, eps, concavity });
    }
    if !weighted_grad_l2.is_finite() {
        return Err(Error::Eval("contamination integrand is not finite".into()));
    }
    Ok(ContaminationBound {
        bound: eps * weighted_grad_l2 / concavity,
        weighted_grad_l2,
        eps,
        concavity,
    })
}
