//! One function per subcommand. Each reads its keys from the configuration, runs the
//! library operation and returns the command-specific part of the JSON report.

use crate::config::Config;
use crate::error::{AtKey, CliError};
use crate::report::to_value;
use crate::specs;
use mfvi_core::applications::{
    bvm_linreg, bvm_report, contamination_sensitivity, control_value, control_value_stability,
    linreg_tau_bound, prior_swap_interval, LocalCertificate,
};
use mfvi_core::potentials::{
    symmetric_bounds, Contaminated, Potential, Quadratic, ScalarPotential, Separable,
};
use mfvi_core::sensitivity::{finite_diff_check, solve_derivative, HermiteBasis};
use mfvi_core::solver::{cavi_solve, solve_lifted_with, CaviConfig, Init, SolverConfig};
use mfvi_core::stability::{density_envelope, lipschitz_w2_bound};
use mfvi_core::transport::{
    h1_distance, lp_distance, push_samples, write_map_csv, MCQuadrature, PointSet, TransportMap,
};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Map, Value};
use std::path::Path;
use std::sync::Arc;

/// Default number of points used for the L² norms inside the bounds.
pub const DEFAULT_BOUND_SAMPLES: usize = 20_000;

/// Everything a command needs besides its own keys.
pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub out_dir: &'a Path,
}

/// Command result: report fields plus the seed recorded in the report header.
pub struct Outcome {
    pub fields: Map<String, Value>,
    pub seed: u64,
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn map_summary(t: &TransportMap) -> Value {
    let mom = t.marginal_moments();
    json!({
        "marginal_means": mom.iter().map(|m| m.0).collect::<Vec<_>>(),
        "marginal_stds": mom.iter().map(|m| m.1.max(0.0).sqrt()).collect::<Vec<_>>(),
    })
}

fn save_map(ctx: &Ctx, t: &TransportMap, name: &str) -> Result<Value, CliError> {
    write_map_csv(t, ctx.out_dir.join(name))?;
    Ok(Value::String(name.to_string()))
}

/// Sample set for bound norms: `n` fresh points (seed + 1) pushed through `t`.
fn bound_samples(t: &TransportMap, cfg: &SolverConfig, n: usize) -> Result<(PointSet, u64), CliError> {
    let seed = cfg.seed.wrapping_add(1);
    let q = MCQuadrature::with_scheme(seed, n, t.dim(), cfg.scheme)?;
    Ok((push_samples(t, &q)?, seed))
}

fn sample_count(ctx: &Ctx, key: &str) -> Result<usize, CliError> {
    let n = ctx.cfg.usize_or(key, DEFAULT_BOUND_SAMPLES)?;
    if n == 0 {
        return Err(CliError::Config { key: key.into(), message: "must be positive".into() });
    }
    Ok(n)
}

/// Solves two targets on common quadrature points.
fn solve_pair(
    p: &dyn Potential,
    pt: &dyn Potential,
    cfg: &SolverConfig,
) -> Result<(mfvi_core::solver::LiftedSolution, mfvi_core::solver::LiftedSolution), CliError> {
    if p.dim() != pt.dim() {
        return Err(CliError::Config {
            key: "potential_tilde".into(),
            message: format!("dimension {} differs from potential dimension {}", pt.dim(), p.dim()),
        });
    }
    let q = cfg.quadrature(p.dim())?;
    let a = solve_lifted_with(p, cfg, &q, Init::Auto).at("potential")?;
    let b = solve_lifted_with(pt, cfg, &q, Init::Auto).at("potential_tilde")?;
    Ok((a, b))
}

pub fn solve(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = specs::potential(ctx.cfg, "potential")?;
    let cfg = specs::solver_config(ctx.cfg)?;
    let init = specs::solver_init(ctx.cfg)?;
    let q = cfg.quadrature(p.dim())?;
    ctx.cfg.finish()?;
    if let Init::Map(t) = &init {
        if t.dim() != p.dim() {
            return Err(CliError::Config {
                key: "solver.init_file".into(),
                message: format!("map has dimension {}, potential has {}", t.dim(), p.dim()),
            });
        }
    }
    let sol = solve_lifted_with(p.as_ref(), &cfg, &q, init).at("potential")?;
    let mut f = obj(json!({
        "label": p.label(),
        "dim": p.dim(),
        "alpha": p.alpha(),
        "beta": p.beta(),
        "elbo": sol.elbo,
        "functional_value": sol.functional_value,
        "residual": sol.residual,
        "iterations": sol.iterations,
        "trace": sol.trace,
    }));
    f.extend(obj(map_summary(&sol.map)));
    f.insert("map_csv".into(), save_map(ctx, &sol.map, "solve_map.csv")?);
    let sidecar = json!({
        "elbo": sol.elbo,
        "functional_value": sol.functional_value,
        "residual": sol.residual,
        "iterations": sol.iterations,
    });
    crate::report::write_json(&ctx.out_dir.join("solve_map.json"), &sidecar)?;
    f.insert("map_json".into(), json!("solve_map.json"));
    Ok(Outcome { fields: f, seed: cfg.seed })
}

pub fn cavi(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = specs::potential(ctx.cfg, "potential")?;
    let cfg = specs::cavi_config(ctx.cfg, CaviConfig::default().energy_stride)?;
    ctx.cfg.finish()?;
    let res = cavi_solve(p.as_ref(), &cfg).at("cavi")?;
    let mut f = obj(json!({
        "label": p.label(),
        "dim": p.dim(),
        "sweeps": res.sweeps,
        "last_change": res.last_change,
        "density_means": res.densities.iter().map(|d| d.mean()).collect::<Vec<_>>(),
        "density_stds": res.densities.iter().map(|d| d.variance().max(0.0).sqrt()).collect::<Vec<_>>(),
    }));
    f.extend(obj(map_summary(&res.map)));
    f.insert("map_csv".into(), save_map(ctx, &res.map, "cavi_map.csv")?);
    Ok(Outcome { fields: f, seed: cfg.seed })
}

pub fn stability(ctx: &Ctx) -> Result<Outcome, CliError> {
    let p = specs::potential(ctx.cfg, "potential")?;
    let pt = specs::potential(ctx.cfg, "potential_tilde")?;
    let cfg = specs::solver_config(ctx.cfg)?;
    ctx.cfg.table("stability")?;
    let n = sample_count(ctx, "stability.samples")?;
    ctx.cfg.finish()?;
    let (sol, sol_t) = solve_pair(p.as_ref(), pt.as_ref(), &cfg)?;
    let (samples_t, sample_seed) = bound_samples(&sol_t.map, &cfg, n)?;
    let (samples, _) = bound_samples(&sol.map, &cfg, n)?;
    let rep = lipschitz_w2_bound(p.as_ref(), pt.as_ref(), &samples_t, Some(&samples))?;
    let env = density_envelope(p.as_ref(), &cfg.quadrature(p.dim())?).at("potential")?;
    let mut f = obj(to_value(&rep)?);
    f.remove("seed");
    f.extend(obj(json!({
        "envelope": {
            "C": env.c,
            "log_C": env.log_c,
            "kl_upper": env.kl_upper,
            "second_moment_bound": env.second_moment_bound,
        },
        "measured_w2": lp_distance(&sol.map, &sol_t.map, 2.0)?,
        "measured_h1": h1_distance(&sol.map, &sol_t.map)?,
        "residuals": [sol.residual, sol_t.residual],
        "meta": { "seed": cfg.seed, "sample_seed": sample_seed, "n": n, "m": cfg.grid_m },
    })));
    f.insert("map_csv".into(), save_map(ctx, &sol.map, "stability_map.csv")?);
    f.insert("map_tilde_csv".into(), save_map(ctx, &sol_t.map, "stability_map_tilde.csv")?);
    Ok(Outcome { fields: f, seed: cfg.seed })
}

pub fn sensitivity(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    c.table("sensitivity")?;
    let fam = specs::family(c, "family", "sensitivity.direction")?;
    let cfg = specs::solver_config(c)?;
    let k = c.usize_or("sensitivity.K", 6)?;
    let theta0 = c.f64("sensitivity.theta0")?;
    let h_list = c.opt_vec("sensitivity.h_list")?.unwrap_or_else(|| vec![0.2, 0.1, 0.05]);
    c.finish()?;
    let (fd, sol) = if h_list.is_empty() {
        let q = cfg.quadrature(fam.dim())?;
        let p0 = fam.at(theta0).at("sensitivity.theta0")?;
        let t0 = solve_lifted_with(p0.as_ref(), &cfg, &q, Init::Auto).at("family")?.map;
        let basis = HermiteBasis::new(k).at("sensitivity.K")?;
        (None, solve_derivative(fam.as_ref(), theta0, &t0, &basis, &q).at("family")?)
    } else {
        let (fd, s) = finite_diff_check(fam.as_ref(), theta0, &h_list, &cfg, k).at("sensitivity")?;
        (Some(fd), s)
    };
    let coeffs: Vec<Vec<f64>> = (0..sol.dim).map(|i| sol.coord_coeffs(i).to_vec()).collect();
    let f = obj(json!({
        "theta0": theta0,
        "K": k,
        "dim": sol.dim,
        "alpha": fam.alpha(),
        "coeffs": coeffs,
        "residual": sol.residual,
        "rhs_norm": sol.rhs_norm,
        "lambda_min_estimate": sol.lambda_min,
        "lambda_max_estimate": sol.lambda_max,
        "l2_norm": sol.l2_norm(),
        "fd_check": fd.map(|fd| json!({ "h": fd.h, "err": fd.err, "slope": fd.slope })),
    }));
    Ok(Outcome { fields: f, seed: cfg.seed })
}

fn local_certificate(c: &Config) -> Result<Option<LocalCertificate>, CliError> {
    if !c.table("bvm.local")? {
        return Ok(None);
    }
    Ok(Some(LocalCertificate {
        ell: c.f64("bvm.local.ell")?,
        tau: c.f64_or("bvm.local.tau", 0.0)?,
        s: c.f64("bvm.local.s")?,
        c: c.f64("bvm.local.C")?,
    }))
}

pub fn bvm(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    c.table("bvm")?;
    let f = specs::potential(c, "potential")?;
    let n = c.usize("bvm.n")?;
    let local = local_certificate(c)?;
    let cfg = specs::solver_config(c)?;
    let solve = c.bool_or("bvm.solve", true)?;
    c.finish()?;
    let rep = bvm_report(f, n, local, solve.then_some(&cfg)).at("bvm")?;
    Ok(Outcome { fields: obj(to_value(&rep)?), seed: cfg.seed })
}

pub fn linreg(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    if !c.table("linreg")? {
        return Err(CliError::Config { key: "linreg".into(), message: "missing required table".into() });
    }
    let (d, a) = c.square("linreg.gram")?;
    let a = DMatrix::from_row_slice(d, d, &a);
    let w = c.vec("linreg.response")?;
    if w.len() != d {
        return Err(CliError::Config {
            key: "linreg.response".into(),
            message: format!("expected {d} entries, found {}", w.len()),
        });
    }
    let w = DVector::from_vec(w);
    let tau = c.f64("linreg.tau")?;
    let tau_hat = c.f64("linreg.tau_hat")?;
    let prior = specs::scalar_prior(c, "linreg.prior")?;
    let cfg = specs::solver_config(c)?;
    let n = sample_count(ctx, "linreg.samples")?;
    let nobs = c.opt_usize("linreg.n")?;
    c.finish()?;
    let v = Separable::linreg(a.clone(), w.clone(), tau, prior.clone()).at("linreg.tau")?;
    let v_hat = Separable::linreg(a.clone(), w.clone(), tau_hat, prior.clone()).at("linreg.tau_hat")?;
    let q = cfg.quadrature(d)?;
    let sol = solve_lifted_with(&v, &cfg, &q, Init::Auto).at("linreg.tau")?;
    let sol_hat = solve_lifted_with(&v_hat, &cfg, &q, Init::Auto).at("linreg.tau_hat")?;
    let (samples_hat, _) = bound_samples(&sol_hat.map, &cfg, n)?;
    let rep = linreg_tau_bound(&a, &w, tau, tau_hat, prior.clone(), &samples_hat).at("linreg")?;
    let mut f = obj(to_value(&rep)?);
    f.insert("measured_w2".into(), json!(lp_distance(&sol.map, &sol_hat.map, 2.0)?));
    f.insert("residuals".into(), json!([sol.residual, sol_hat.residual]));
    if let Some(nobs) = nobs {
        let b = bvm_linreg(a, w, tau, prior, nobs, None).at("linreg.n")?;
        f.insert("bvm".into(), to_value(&b)?);
    }
    f.insert("map_csv".into(), save_map(ctx, &sol.map, "linreg_map.csv")?);
    f.insert("map_hat_csv".into(), save_map(ctx, &sol_hat.map, "linreg_map_hat.csv")?);
    Ok(Outcome { fields: f, seed: cfg.seed })
}

/// Posterior ½(x − m)ᵀP(x − m) + Σ v(xᵢ) as a linear-model potential with A = P,
/// w = Pm and τ = 1.
fn gaussian_likelihood_posterior(
    like: &Quadratic,
    prior: Arc<dyn ScalarPotential>,
    key: &str,
) -> Result<Separable, CliError> {
    Separable::linreg(like.precision.clone(), &like.precision * &like.mean, 1.0, prior).at(key)
}

pub fn prior_swap(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    c.table("prior_swap")?;
    let like = specs::quadratic(c, "likelihood")?;
    let d = like.dim();
    let prior = specs::scalar_prior(c, "prior")?;
    let prior_t = specs::scalar_prior(c, "prior_tilde")?;
    let cfg = specs::solver_config(c)?;
    let n = sample_count(ctx, "prior_swap.samples")?;
    let statistic = match c.opt_vec("prior_swap.statistic")? {
        Some(v) if v.len() == d => Some(v),
        Some(v) => {
            return Err(CliError::Config {
                key: "prior_swap.statistic".into(),
                message: format!("expected {d} entries, found {}", v.len()),
            })
        }
        None => None,
    };
    let default_ell = statistic.as_ref().map_or(1.0, |s| s.iter().map(|x| x * x).sum::<f64>().sqrt());
    let ell = c.f64_or("prior_swap.ell", default_ell)?;
    let (like_alpha, _) = symmetric_bounds(&like.precision).at("likelihood.precision")?;
    let alpha_nd = c.f64_or("prior_swap.alpha_nd", like_alpha)?;
    let alpha_d = c.f64_or("prior_swap.alpha_d", prior_t.alpha())?;
    c.finish()?;

    let post = gaussian_likelihood_posterior(&like, prior.clone(), "prior")?;
    let post_t = gaussian_likelihood_posterior(&like, prior_t.clone(), "prior_tilde")?;
    let (sol, sol_t) = solve_pair(&post, &post_t, &cfg)?;
    let (samples_t, _) = bound_samples(&sol_t.map, &cfg, n)?;
    let (samples, _) = bound_samples(&sol.map, &cfg, n)?;
    let pp = Separable::product(vec![prior; d]).at("prior")?;
    let pp_t = Separable::product(vec![prior_t; d]).at("prior_tilde")?;
    let phi = statistic.clone().map(|s| move |x: &[f64]| x.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>());
    let rep = prior_swap_interval(
        ell,
        &pp,
        &pp_t,
        &samples_t,
        alpha_nd,
        alpha_d,
        phi.as_ref().map(|f| f as &dyn Fn(&[f64]) -> f64),
    )
    .at("prior_swap")?;
    let mut f = obj(to_value(&rep)?);
    if let Some(phi) = &phi {
        let v: Vec<f64> = samples.rows().map(phi).collect();
        f.insert("statistic_mean_reference".into(), json!(v.iter().sum::<f64>() / v.len() as f64));
    }
    f.insert("alpha_nd".into(), json!(alpha_nd));
    f.insert("alpha_d".into(), json!(alpha_d));
    f.insert("measured_w2".into(), json!(lp_distance(&sol.map, &sol_t.map, 2.0)?));
    Ok(Outcome { fields: f, seed: cfg.seed })
}

pub fn contamination(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    c.table("contamination")?;
    let like = specs::quadratic(c, "likelihood")?;
    let d = like.dim();
    let mu = c.vec("contamination.mu")?;
    if mu.len() != d {
        return Err(CliError::Config {
            key: "contamination.mu".into(),
            message: format!("expected {d} entries, found {}", mu.len()),
        });
    }
    let mu = DVector::from_vec(mu);
    let eps = c.f64("contamination.eps")?;
    let cfg = specs::solver_config(c)?;
    let n = sample_count(ctx, "contamination.samples")?;
    let (like_alpha, _) = symmetric_bounds(&like.precision).at("likelihood.precision")?;
    let alpha_nd = c.f64_or("contamination.alpha_nd", like_alpha)?;
    let alpha_eps = c.f64_or("contamination.alpha_eps", Contaminated::prior_alpha(&mu))?;
    c.finish()?;

    let base = Contaminated::new(like.clone(), mu.clone(), 0.0).at("contamination.mu")?;
    let pert = Contaminated::new(like, mu.clone(), eps).at("contamination.eps")?;
    let (sol, sol_e) = solve_pair(&base, &pert, &cfg)?;
    let (samples, _) = bound_samples(&sol.map, &cfg, n)?;
    let ln2pi = 0.5 * d as f64 * (2.0 * std::f64::consts::PI).ln();
    let p_ref = Quadratic::new(DMatrix::identity(d, d), DVector::zeros(d)).at("contamination")?.with_offset(ln2pi);
    let q = Quadratic::new(DMatrix::identity(d, d), mu).at("contamination.mu")?.with_offset(ln2pi);
    let rep = contamination_sensitivity(&p_ref, &q, eps, &samples, alpha_nd, alpha_eps).at("contamination")?;
    let mut f = obj(to_value(&rep)?);
    f.insert("alpha_nd".into(), json!(alpha_nd));
    f.insert("alpha_eps".into(), json!(alpha_eps));
    f.insert("measured_w2".into(), json!(lp_distance(&sol.map, &sol_e.map, 2.0)?));
    Ok(Outcome { fields: f, seed: cfg.seed })
}

pub fn control(ctx: &Ctx) -> Result<Outcome, CliError> {
    let c = ctx.cfg;
    c.table("control")?;
    let g = specs::utility(c, "utility")?;
    let gt = specs::utility(c, "utility_tilde")?;
    if g.dim() != gt.dim() {
        return Err(CliError::Config {
            key: "utility_tilde".into(),
            message: format!("dimension {} differs from utility dimension {}", gt.dim(), g.dim()),
        });
    }
    let horizon = c.f64("control.horizon")?;
    let beta = c.f64_or("control.beta", g.beta().max(gt.beta()))?;
    let from = c.opt_str("control.samples_from")?.unwrap_or_else(|| "utility".into());
    let cfg = specs::solver_config(c)?;
    let n = sample_count(ctx, "control.samples")?;
    c.finish()?;
    let val = control_value(g.clone(), horizon, &cfg).at("utility")?;
    let val_t = control_value(gt.clone(), horizon, &cfg).at("utility_tilde")?;
    let source = match from.as_str() {
        "utility" => &val.solution.map,
        "utility_tilde" => &val_t.solution.map,
        other => {
            return Err(CliError::Config {
                key: "control.samples_from".into(),
                message: format!("expected utility or utility_tilde, found '{other}'"),
            })
        }
    };
    let (samples, _) = bound_samples(source, &cfg, n)?;
    let rep = control_value_stability(g.as_ref(), gt.as_ref(), beta, horizon, &samples).at("control")?;
    let mut f = obj(to_value(&rep)?);
    f.insert("value".into(), json!(val.value));
    f.insert("value_tilde".into(), json!(val_t.value));
    f.insert("value_gap".into(), json!((val_t.value - val.value).abs()));
    f.insert("samples_from".into(), json!(from));
    f.insert("map_csv".into(), save_map(ctx, &val.solution.map, "control_map.csv")?);
    Ok(Outcome { fields: f, seed: cfg.seed })
}
