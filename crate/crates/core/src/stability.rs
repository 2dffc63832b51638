//! Stability bounds for the mean-field optimizer: Wasserstein and H¹ Lipschitz bounds,
//! reward (maximum ELBO) bounds, the density envelope of the optimizer with its L²
//! comparison constant, explicit parametric bounds, W_p bounds and the
//! incomplete-gamma tail bound.

use crate::error::{Error, Result};
use crate::numerics::{abs_normal_moment, integrate_tol, ln_gamma, ln_sphere_area, pairwise_sum};
use crate::potentials::{find_mode, Mode, ParametricFamily, Potential};
use crate::transport::{MCQuadrature, PointSet};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn check_samples(p: &dyn Potential, pt: &dyn Potential, s: &PointSet) -> Result<()> {
    s.require_nonempty("stability bound")?;
    if p.dim() != pt.dim() {
        return Err(Error::shape(p.dim(), pt.dim()));
    }
    if s.dim() != p.dim() {
        return Err(Error::shape(p.dim(), s.dim()));
    }
    Ok(())
}

/// Sample moments of the discrepancy between two potentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    /// ‖∇Ṽ − ∇V‖ in L² of the sample measure.
    pub grad_l2: f64,
    /// ‖Ṽ − V‖ in L² of the sample measure.
    pub value_l2: f64,
    /// Mean of Ṽ − V.
    pub value_mean: f64,
}

/// Discrepancy moments of (Ṽ − V) over the rows of `samples`.
pub fn discrepancy(p: &dyn Potential, pt: &dyn Potential, samples: &PointSet) -> Result<Discrepancy> {
    check_samples(p, pt, samples)?;
    let d = p.dim();
    let n = samples.len();
    let (mut g, mut gt) = (vec![0.0; d], vec![0.0; d]);
    let mut sq_grad = Vec::with_capacity(n);
    let mut diff = Vec::with_capacity(n);
    for x in samples.rows() {
        p.grad_into(x, &mut g);
        pt.grad_into(x, &mut gt);
        sq_grad.push(g.iter().zip(&gt).map(|(a, b)| (b - a) * (b - a)).sum::<f64>());
        diff.push(pt.value(x) - p.value(x));
    }
    let sq_val: Vec<f64> = diff.iter().map(|v| v * v).collect();
    let nf = n as f64;
    let out = Discrepancy {
        grad_l2: (pairwise_sum(&sq_grad) / nf).sqrt(),
        value_l2: (pairwise_sum(&sq_val) / nf).sqrt(),
        value_mean: pairwise_sum(&diff) / nf,
    };
    if !(out.grad_l2.is_finite() && out.value_l2.is_finite()) {
        return Err(Error::Eval("potential discrepancy is not finite".into()));
    }
    Ok(out)
}

/// ‖∇Ṽ − ∇V‖_{L²} over the rows of `samples`.
pub fn grad_diff_l2(p: &dyn Potential, pt: &dyn Potential, samples: &PointSet) -> Result<f64> {
    Ok(discrepancy(p, pt, samples)?.grad_l2)
}

/// All first-order stability bounds for a pair of targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    /// W₂ bound G/α from samples of ν̃*.
    pub bound_w2: f64,
    /// W₂ bound with roles exchanged, G_rev/α̃, when samples of ν* were supplied.
    pub bound_w2_reversed: Option<f64>,
    /// Minimum of the available directed W₂ bounds.
    pub bound_w2_min: f64,
    /// Bound on the H(ρ) distance of the two optimal maps.
    pub bound_h1: f64,
    /// G = ‖∇Ṽ − ∇V‖_{L²(ν̃*)}.
    pub grad_diff_l2: f64,
    /// ‖∇Ṽ − ∇V‖_{L²(ν*)}, when samples of ν* were supplied.
    pub grad_diff_l2_reversed: Option<f64>,
    /// Strong-convexity constant of V, the divisor of `bound_w2`.
    pub alpha_used: f64,
    /// Common smoothness constant max(β, β̃) used by the reward bounds.
    pub beta_used: f64,
    /// Common convexity constant min(α, α̃) used by the reward bounds.
    pub reward_alpha: f64,
    pub reward_bound: f64,
    pub reward_bound_normalized: f64,
    /// ∫(Ṽ − V)dν̃*, assumed zero by the normalized reward bound.
    pub mean_offset: f64,
    /// ‖Ṽ − V‖_{L²(ν̃*)}.
    pub value_diff_l2: f64,
    pub sample_count: usize,
    pub seed: Option<u64>,
}

/// First-order stability report from samples of ν̃* and, optionally, of ν*.
pub fn lipschitz_w2_bound(
    p: &dyn Potential,
    pt: &dyn Potential,
    samples_tilde: &PointSet,
    samples_star: Option<&PointSet>,
) -> Result<StabilityReport> {
    let disc = discrepancy(p, pt, samples_tilde)?;
    let g = disc.grad_l2;
    let alpha = p.alpha();
    let bound_w2 = g / alpha;
    let reversed = match samples_star {
        Some(s) => Some(grad_diff_l2(p, pt, s)?),
        None => None,
    };
    let bound_w2_reversed = reversed.map(|gr| gr / pt.alpha());
    let bound_w2_min = bound_w2_reversed.map_or(bound_w2, |r| r.min(bound_w2));
    let (ra, rb) = common_band(p, pt);
    Ok(StabilityReport {
        bound_w2,
        bound_w2_reversed,
        bound_w2_min,
        bound_h1: g / ra,
        grad_diff_l2: g,
        grad_diff_l2_reversed: reversed,
        alpha_used: alpha,
        beta_used: rb,
        reward_alpha: ra,
        reward_bound: reward_formula(ra, rb, p.dim(), g, false) + disc.value_l2,
        reward_bound_normalized: reward_formula(ra, rb, p.dim(), g, true),
        mean_offset: disc.value_mean,
        value_diff_l2: disc.value_l2,
        sample_count: samples_tilde.len(),
        seed: None,
    })
}

/// Bound on ‖T^Ṽ − T^V‖_{H(ρ)}, covering both map and slope differences.
pub fn h1_bound(p: &dyn Potential, pt: &dyn Potential, samples_tilde: &PointSet) -> Result<f64> {
    let (alpha, _) = common_band(p, pt);
    Ok(grad_diff_l2(p, pt, samples_tilde)? / alpha)
}

fn common_band(p: &dyn Potential, pt: &dyn Potential) -> (f64, f64) {
    (p.alpha().min(pt.alpha()), p.beta().max(pt.beta()))
}

fn reward_formula(alpha: f64, beta: f64, d: usize, g: f64, normalized: bool) -> f64 {
    let lead = 2.0 * (beta * d as f64).sqrt() + if normalized { 1.0 } else { 0.0 };
    lead / alpha * g + beta / (2.0 * alpha * alpha) * g * g
}

/// Reward bound with the mean offset it relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBound {
    pub value: f64,
    pub mean_offset: f64,
}

/// Bound on |R(Ṽ) − R(V)|, the change of the maximum ELBO. The normalized variant
/// drops ‖Ṽ − V‖ and assumes `mean_offset` = 0.
pub fn reward_bound(
    p: &dyn Potential,
    pt: &dyn Potential,
    samples_tilde: &PointSet,
    normalized: bool,
) -> Result<RewardBound> {
    let disc = discrepancy(p, pt, samples_tilde)?;
    let (a, b) = common_band(p, pt);
    let mut value = reward_formula(a, b, p.dim(), disc.grad_l2, normalized);
    if !normalized {
        value += disc.value_l2;
    }
    Ok(RewardBound { value, mean_offset: disc.value_mean })
}

/// KL(μ‖π) ≤ I(μ|π)/(2α) for μ = N(mean, var·I), with the relative Fisher
/// information estimated on the quadrature points.
pub fn kl_upper_lsi(p: &dyn Potential, mean: &[f64], var: f64, q: &MCQuadrature) -> Result<f64> {
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Param(format!("mu_var must be positive, got {var}")));
    }
    let d = p.dim();
    if mean.len() != d || q.dim() != d {
        return Err(Error::shape(d, format!("{} / {}", mean.len(), q.dim())));
    }
    let sd = var.sqrt();
    let terms: Vec<f64> = q
        .points()
        .rows()
        .map(|u| {
            let x: Vec<f64> = u.iter().zip(mean).map(|(ui, m)| m + sd * ui).collect();
            let g = p.grad(&x);
            g.iter().zip(u).map(|(gi, ui)| (gi - ui / sd).powi(2)).sum::<f64>()
        })
        .collect();
    let fisher = pairwise_sum(&terms) / q.len() as f64;
    if !fisher.is_finite() {
        return Err(Error::Eval("relative Fisher information is not finite".into()));
    }
    Ok(fisher / (2.0 * p.alpha()))
}

/// Upper envelope ν*(x) ≤ C·exp(−α‖x − x*‖²/2) for the mean-field optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeCertificate {
    #[serde(rename = "C")]
    pub c: f64,
    pub log_c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub x_star: Vec<f64>,
    /// Upper estimate of KL(N(x*, α⁻¹I)‖π).
    pub kl_upper: f64,
    /// Bound on ∫‖x − x*‖² dν*.
    pub second_moment_bound: f64,
}

impl EnvelopeCertificate {
    /// log of the joint envelope at x.
    pub fn log_density_bound(&self, x: &[f64]) -> f64 {
        let r2: f64 = x.iter().zip(&self.x_star).map(|(a, b)| (a - b).powi(2)).sum();
        self.log_c - 0.5 * self.alpha * r2
    }

    /// Envelope for the i-th marginal density, obtained by integrating the joint
    /// envelope over the other coordinates.
    pub fn marginal_bound(&self, i: usize, xi: f64) -> f64 {
        let rest = (self.x_star.len() - 1) as f64;
        let log = self.log_c + 0.5 * rest * (2.0 * PI / self.alpha).ln()
            - 0.5 * self.alpha * (xi - self.x_star[i]).powi(2);
        log.exp()
    }

    /// log of the mass carried by the envelope, C·(2π/α)^{d/2}; never negative.
    pub fn log_mass(&self) -> f64 {
        self.log_c + 0.5 * self.x_star.len() as f64 * (2.0 * PI / self.alpha).ln()
    }
}

/// Density envelope of the optimizer, computed from α, β and the mode only.
///
/// C = (β/2π)^{d/2}·exp((β − α)d/α·[2·KL + d]) with the KL term replaced by its
/// log-Sobolev upper estimate.
pub fn density_envelope(p: &dyn Potential, q: &MCQuadrature) -> Result<EnvelopeCertificate> {
    let mode = find_mode(p, &vec![0.0; p.dim()])?;
    envelope_at_mode(p, &mode, q)
}

pub(crate) fn envelope_at_mode(
    p: &dyn Potential,
    mode: &Mode,
    q: &MCQuadrature,
) -> Result<EnvelopeCertificate> {
    let (alpha, beta) = (p.alpha(), p.beta());
    let d = p.dim() as f64;
    let kl = kl_upper_lsi(p, &mode.x_star, 1.0 / alpha, q)?.max(0.0);
    let log_c = 0.5 * d * (beta / (2.0 * PI)).ln() + (beta - alpha) * d / alpha * (2.0 * kl + d);
    Ok(EnvelopeCertificate {
        c: log_c.exp(),
        log_c,
        alpha,
        beta,
        x_star: mode.x_star.clone(),
        kl_upper: kl,
        second_moment_bound: (4.0 * kl + 2.0 * d) / alpha,
    })
}

/// Constants comparing L²(ν*) norms with Gaussian L² norms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct L2Comparison {
    /// K with ∫f²dν* ≤ K·∫f²(x)·exp(−α‖x‖²/(2(1+ε)))dx.
    pub lebesgue: f64,
    /// K with ‖f‖²_{L²(ν*)} ≤ K·‖f‖²_{L²(N(0, (1+ε)α⁻¹I))}.
    pub gaussian: f64,
    pub log_lebesgue: f64,
    pub log_gaussian: f64,
    pub eps: f64,
    pub envelope: EnvelopeCertificate,
}

/// L² comparison constant between ν* and the centred Gaussian N(0, (1+ε)α⁻¹I).
pub fn l2_comparison_constant(p: &dyn Potential, eps: f64, q: &MCQuadrature) -> Result<L2Comparison> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Param(format!("eps must be positive, got {eps}")));
    }
    let env = density_envelope(p, q)?;
    let r2: f64 = env.x_star.iter().map(|v| v * v).sum();
    let a = env.alpha;
    let log_lebesgue = env.log_c + (1.0 + 1.0 / eps) * a / (2.0 * (1.0 + eps)) * r2;
    let d = env.x_star.len() as f64;
    let log_gaussian = log_lebesgue + 0.5 * d * (2.0 * PI * (1.0 + eps) / a).ln();
    Ok(L2Comparison {
        lebesgue: log_lebesgue.exp(),
        gaussian: log_gaussian.exp(),
        log_lebesgue,
        log_gaussian,
        eps,
        envelope: env,
    })
}

/// Growth profile f in ‖∇V_θ̃(x) − ∇V_θ(x)‖ ≤ L‖θ̃ − θ‖f(x).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthKind {
    /// f(x) = ‖x‖^{p/2}
    PolyP,
    /// f(x) = exp(‖x‖/2)
    ExpHalf,
}

impl std::str::FromStr for GrowthKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poly_p" => Ok(Self::PolyP),
            "exp_half" => Ok(Self::ExpHalf),
            other => Err(Error::Param(format!("unknown growth kind '{other}'"))),
        }
    }
}

/// Explicit W₂ bound with its ingredients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitBound {
    pub value: f64,
    /// ∫f(x)²·exp(−α_θ‖x − x*_θ‖²/2)dx, bounded in closed form or by quadrature.
    pub bracket: f64,
    pub alpha_tilde: f64,
    pub envelope: EnvelopeCertificate,
}

/// Closed-form majorant of ∫‖x‖^p·exp(−α‖x − x*‖²/2)dx for p ≥ 1.
pub fn poly_bracket(alpha: f64, d: usize, p: f64, x_star_norm: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::Param(format!("growth exponent p must be >= 1, got {p}")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
    }
    let df = d as f64;
    let log_pref = ln_sphere_area(d) + 0.5 * (2.0 * p + df - 4.0) * 2f64.ln() - 0.5 * df * alpha.ln();
    let first = if x_star_norm > 0.0 {
        (p * x_star_norm.ln() + ln_gamma(0.5 * df)).exp()
    } else {
        0.0
    };
    let second = (0.5 * p * (2.0 / alpha).ln() + ln_gamma(0.5 * (p + df))).exp();
    Ok(log_pref.exp() * (first + second))
}

/// ∫₀^∞ exp(r − αr²/2)·r^{d−1} dr by adaptive quadrature.
pub fn exp_half_radial_integral(alpha: f64, d: usize) -> Result<f64> {
    if !(alpha > 0.0) || d == 0 {
        return Err(Error::Param(format!("need alpha > 0 and d >= 1, got {alpha}, {d}")));
    }
    let k = (d - 1) as i32;
    let peak = (1.0 + (1.0 + 4.0 * alpha * k as f64).sqrt()) / (2.0 * alpha);
    let f = |r: f64| (r - 0.5 * alpha * r * r).exp() * r.powi(k);
    Ok(integrate_tol(f, 0.0, peak, 0.0, 1e-14)? + integrate_tol(f, peak, f64::INFINITY, 0.0, 1e-14)?)
}

/// Majorant of ∫exp(‖x‖)·exp(−α‖x − x*‖²/2)dx.
pub fn exp_bracket(alpha: f64, d: usize, x_star_norm: f64) -> Result<f64> {
    Ok((ln_sphere_area(d) + x_star_norm).exp() * exp_half_radial_integral(alpha, d)?)
}

/// W₂(ν*_θ̃, ν*_θ) bound that needs no optimizer, only α, β and the mode of V_θ.
#[allow(clippy::too_many_arguments)]
pub fn explicit_parametric_bound(
    fam: &dyn ParametricFamily,
    theta: f64,
    theta_tilde: f64,
    kind: GrowthKind,
    lipschitz: f64,
    p_exp: f64,
    q: &MCQuadrature,
) -> Result<ExplicitBound> {
    if !(lipschitz >= 0.0 && lipschitz.is_finite()) {
        return Err(Error::Param(format!("L must be nonnegative, got {lipschitz}")));
    }
    let v = fam.at(theta)?;
    let alpha_tilde = fam.at(theta_tilde)?.alpha();
    let env = density_envelope(v.as_ref(), q)?;
    let xn = env.x_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bracket = match kind {
        GrowthKind::PolyP => poly_bracket(env.alpha, fam.dim(), p_exp, xn)?,
        GrowthKind::ExpHalf => exp_bracket(env.alpha, fam.dim(), xn)?,
    };
    let value = lipschitz * (0.5 * env.log_c).exp() / alpha_tilde
        * bracket.sqrt()
        * (theta_tilde - theta).abs();
    Ok(ExplicitBound { value, bracket, alpha_tilde, envelope: env })
}

/// W_p bounds on the optimal map and its slope along a parametric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpBound {
    pub map_bound: f64,
    pub derivative_bound: f64,
    /// G_p = ‖∇V_θ − ∇V_θ₀‖ in L^p of the sample measure.
    pub g_p: f64,
}

/// W_p(ν*_θ, ν*_θ₀) and slope bounds, with `samples` drawn from ν*_θ.
pub fn wp_bound(
    fam: &dyn ParametricFamily,
    theta: f64,
    theta0: f64,
    samples: &PointSet,
    p: f64,
) -> Result<WpBound> {
    if !(p >= 2.0 && p.is_finite()) {
        return Err(Error::Param(format!("p must be >= 2, got {p}")));
    }
    samples.require_nonempty("wp_bound")?;
    let d = fam.dim();
    if samples.dim() != d {
        return Err(Error::shape(d, samples.dim()));
    }
    let (v, v0) = (fam.at(theta)?, fam.at(theta0)?);
    let (mut g, mut g0) = (vec![0.0; d], vec![0.0; d]);
    let terms: Vec<f64> = samples
        .rows()
        .map(|x| {
            v.grad_into(x, &mut g);
            v0.grad_into(x, &mut g0);
            g.iter().zip(&g0).map(|(a, b)| (a - b).powi(2)).sum::<f64>().powf(0.5 * p)
        })
        .collect();
    let g_p = (pairwise_sum(&terms) / samples.len() as f64).powf(1.0 / p);
    let (alpha, beta) = (fam.alpha(), fam.beta());
    let df = d as f64;
    let kappa = beta / alpha;
    let map_bound = df.powf(0.5 * (p - 2.0)) * (alpha + df.sqrt() * beta) / (alpha * alpha) * g_p;
    let r = p / (p - 1.0);
    let m_r = (PI / 2.0).powf(r) * abs_normal_moment(r);
    let poly = df.powf(0.5 * (p - 2.0))
        + df.powf(p - 1.0) * kappa
        + df.powf(0.5 * (2.0 * p - 1.0)) * kappa * kappa;
    let derivative_bound = m_r.powf((p - 1.0) / p) * poly / alpha * g_p;
    Ok(WpBound { map_bound, derivative_bound, g_p })
}

/// Tail bound ∫_{‖y‖≥s}‖y‖²exp(−α‖y‖²/2)dy ≤ S(d)(d + 2)s^d/(2α)·exp(−αs²/2),
/// valid when αs² > d + 2.
pub fn incomplete_gamma_bound(alpha: f64, s: f64, d: usize) -> Result<f64> {
    if !(alpha > 0.0) || !(s > 0.0) || d == 0 {
        return Err(Error::Param(format!("need alpha > 0, s > 0, d >= 1; got {alpha}, {s}, {d}")));
    }
    if !(alpha * s * s > (d + 2) as f64) {
        return Err(Error::Domain(format!(
            "incomplete-gamma bound needs alpha*s^2 > d+2, got {} <= {}",
            alpha * s * s,
            d + 2
        )));
    }
    Ok(ln_incomplete_gamma_bound(alpha, s, d).exp())
}

pub(crate) fn ln_incomplete_gamma_bound(alpha: f64, s: f64, d: usize) -> f64 {
    let df = d as f64;
    ln_sphere_area(d) + (df + 2.0).ln() + df * s.ln() - (2.0 * alpha).ln() - 0.5 * alpha * s * s
}
