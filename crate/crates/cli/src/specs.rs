//! Builders that turn configuration sections into potentials, families, priors,
//! utilities and solver settings.

use crate::config::Config;
use crate::error::{AtKey, CliError};
use mfvi_core::applications::{
    LinearUtility, NegSoftplusUtility, QuadraticUtility, UtilityRef, ZeroUtility,
};
use mfvi_core::potentials::{
    builtin_family, Contaminated, FamilyKind, FamilyParams, GaussianScalar, Logistic,
    ParametricFamily, Potential, PotentialRef, Quadratic, ScalarPotential, Separable, SoftplusPerturbed,
    SoftplusQuadratic,
};
use mfvi_core::solver::{CaviConfig, Init, SolverConfig};
use mfvi_core::transport::{read_map_csv, Scheme};
use nalgebra::{DMatrix, DVector};
use std::path::Path;
use std::sync::Arc;

fn bad(key: String, message: impl Into<String>) -> CliError {
    CliError::Config { key, message: message.into() }
}

fn scheme(cfg: &Config, key: &str) -> Result<Option<Scheme>, CliError> {
    match cfg.opt_str(key)?.as_deref() {
        None => Ok(None),
        Some("halton") => Ok(Some(Scheme::Halton)),
        Some("iid") => Ok(Some(Scheme::Iid)),
        Some(other) => Err(bad(key.into(), format!("unknown scheme '{other}' (expected halton or iid)"))),
    }
}

/// `[solver]`: grid_m, mc_samples, seed, tol, max_iters, scheme.
pub fn solver_config(cfg: &Config) -> Result<SolverConfig, CliError> {
    let d = SolverConfig::default();
    cfg.table("solver")?;
    let out = SolverConfig {
        grid_m: cfg.usize_or("solver.grid_m", d.grid_m)?,
        mc_samples: cfg.usize_or("solver.mc_samples", d.mc_samples)?,
        seed: cfg.usize_or("solver.seed", d.seed as usize)? as u64,
        tol: cfg.f64_or("solver.tol", d.tol)?,
        max_iters: cfg.usize_or("solver.max_iters", d.max_iters)?,
        scheme: scheme(cfg, "solver.scheme")?.unwrap_or(d.scheme),
    };
    if out.grid_m < 2 {
        return Err(bad("solver.grid_m".into(), "must be at least 2"));
    }
    if out.mc_samples == 0 {
        return Err(bad("solver.mc_samples".into(), "must be positive"));
    }
    if !(out.tol > 0.0 && out.tol.is_finite()) {
        return Err(bad("solver.tol".into(), "must be positive"));
    }
    Ok(out)
}

/// `solver.init`: "auto" (default) or "file", which loads the map CSV at `solver.init_file`.
pub fn solver_init(cfg: &Config) -> Result<Init, CliError> {
    let file = cfg.opt_str("solver.init_file")?;
    match (cfg.opt_str("solver.init")?.as_deref(), file) {
        (None | Some("auto"), None) => Ok(Init::Auto),
        (None | Some("auto"), Some(_)) => Err(bad("solver.init_file".into(), "set only together with init = \"file\"")),
        (Some("file"), Some(path)) => {
            if !Path::new(&path).is_file() {
                return Err(bad("solver.init_file".into(), format!("no such file: {path}")));
            }
            Ok(Init::Map(read_map_csv(&path).at("solver.init_file")?))
        }
        (Some("file"), None) => Err(bad("solver.init_file".into(), "required when init = \"file\"")),
        (Some(other), _) => Err(bad("solver.init".into(), format!("unknown init '{other}' (expected auto or file)"))),
    }
}

/// `[cavi]`: grid_points, half_width, mc_samples, seed, scheme, tol, max_sweeps, grid_m,
/// energy_stride (default `stride`).
pub fn cavi_config(cfg: &Config, stride: usize) -> Result<CaviConfig, CliError> {
    let d = CaviConfig::default();
    cfg.table("cavi")?;
    Ok(CaviConfig {
        grid_points: cfg.usize_or("cavi.grid_points", d.grid_points)?,
        half_width: cfg.f64_or("cavi.half_width", d.half_width)?,
        mc_samples: cfg.usize_or("cavi.mc_samples", d.mc_samples)?,
        seed: cfg.usize_or("cavi.seed", d.seed as usize)? as u64,
        scheme: scheme(cfg, "cavi.scheme")?.unwrap_or(d.scheme),
        tol: cfg.f64_or("cavi.tol", d.tol)?,
        max_sweeps: cfg.usize_or("cavi.max_sweeps", d.max_sweeps)?,
        grid_m: cfg.usize_or("cavi.grid_m", d.grid_m)?,
        energy_stride: cfg.usize_or("cavi.energy_stride", stride)?,
    })
}

fn vector_of_dim(cfg: &Config, key: &str, d: usize, default_zero: bool) -> Result<DVector<f64>, CliError> {
    match cfg.opt_vec(key)? {
        Some(v) if v.len() == d => Ok(DVector::from_vec(v)),
        Some(v) => Err(bad(key.into(), format!("expected {d} entries, found {}", v.len()))),
        None if default_zero => Ok(DVector::zeros(d)),
        None => Err(bad(key.into(), "missing required array")),
    }
}

/// Gaussian quadratic from `precision` (row-major) and optional `mean`.
pub fn quadratic(cfg: &Config, section: &str) -> Result<Quadratic, CliError> {
    let pk = format!("{section}.precision");
    let (d, p) = cfg.square(&pk)?;
    let mean = vector_of_dim(cfg, &format!("{section}.mean"), d, true)?;
    Quadratic::new(DMatrix::from_row_slice(d, d, &p), mean).at(&pk)
}

/// One-dimensional prior: kind = "gaussian" (precision, mean) or
/// "softplus_quadratic" (kappa, weight).
pub fn scalar_prior(cfg: &Config, section: &str) -> Result<Arc<dyn ScalarPotential>, CliError> {
    if !cfg.table(section)? {
        return Err(bad(section.into(), "missing required table"));
    }
    let kk = format!("{section}.kind");
    let kind = cfg.str(&kk)?;
    let k = |name: &str| format!("{section}.{name}");
    Ok(match kind.as_str() {
        "gaussian" => Arc::new(
            GaussianScalar::new(cfg.f64_or(&k("precision"), 1.0)?, cfg.f64_or(&k("mean"), 0.0)?).at(section)?,
        ),
        "softplus_quadratic" => Arc::new(
            SoftplusQuadratic::new(cfg.f64_or(&k("kappa"), 1.0)?, cfg.f64_or(&k("weight"), 1.0)?).at(section)?,
        ),
        other => {
            return Err(bad(kk, format!("unknown prior kind '{other}' (expected gaussian or softplus_quadratic)")))
        }
    })
}

/// Target potential from a table with `kind` in gaussian, isotropic, logistic,
/// softplus_perturbed, linreg, contaminated.
pub fn potential(cfg: &Config, section: &str) -> Result<PotentialRef, CliError> {
    if !cfg.table(section)? {
        return Err(bad(section.into(), "missing required table"));
    }
    let kk = format!("{section}.kind");
    let kind = cfg.str(&kk)?;
    let k = |name: &str| format!("{section}.{name}");
    Ok(match kind.as_str() {
        "gaussian" => Arc::new(quadratic(cfg, section)?),
        "isotropic" => Arc::new(Quadratic::isotropic(cfg.usize(&k("dim"))?, cfg.f64_or(&k("sigma"), 1.0)?).at(section)?),
        "softplus_perturbed" => {
            let q = quadratic(cfg, section)?;
            Arc::new(SoftplusPerturbed::new(q, cfg.f64(&k("weight"))?).at(&k("weight"))?)
        }
        "logistic" => {
            let labels = cfg.vec(&k("labels"))?;
            let feats = cfg.vec(&k("features"))?;
            let n = labels.len();
            if n == 0 || feats.len() % n != 0 {
                return Err(bad(k("features"), format!("expected a row-major matrix with {n} rows")));
            }
            let d = feats.len() / n;
            let x = DMatrix::from_row_slice(n, d, &feats);
            Arc::new(
                Logistic::new(x, labels, cfg.f64_or(&k("ridge"), 1.0)?, cfg.f64_or(&k("scale"), 1.0)?)
                    .at(section)?,
            )
        }
        "linreg" => {
            let (d, a) = cfg.square(&k("gram"))?;
            let w = vector_of_dim(cfg, &k("response"), d, false)?;
            let prior = scalar_prior(cfg, &k("prior"))?;
            Arc::new(Separable::linreg(DMatrix::from_row_slice(d, d, &a), w, cfg.f64(&k("tau"))?, prior).at(section)?)
        }
        "contaminated" => {
            let q = quadratic(cfg, section)?;
            let mu = vector_of_dim(cfg, &k("mu"), q.dim(), false)?;
            Arc::new(Contaminated::new(q, mu, cfg.f64(&k("eps"))?).at(section)?)
        }
        other => return Err(bad(kk, format!("unknown potential kind '{other}'"))),
    })
}

/// Parametric family from `[family]`: kind, matrix, vector, direction, domain, prior.
pub fn family(cfg: &Config, section: &str, direction_key: &str) -> Result<Arc<dyn ParametricFamily>, CliError> {
    if !cfg.table(section)? {
        return Err(bad(section.into(), "missing required table"));
    }
    let k = |name: &str| format!("{section}.{name}");
    let kind: FamilyKind = cfg.str(&k("kind"))?.parse().at(&k("kind"))?;
    let (d, matrix) = cfg.square(&k("matrix"))?;
    let vector = cfg.opt_vec(&k("vector"))?.unwrap_or_else(|| vec![0.0; d]);
    if vector.len() != d {
        return Err(bad(k("vector"), format!("expected {d} entries, found {}", vector.len())));
    }
    let direction = match (cfg.opt_vec(direction_key)?, cfg.opt_vec(&k("direction"))?) {
        (Some(_), Some(_)) => {
            return Err(bad(direction_key.into(), format!("set either {direction_key} or {}, not both", k("direction"))))
        }
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => {
            let mut e = vec![0.0; d];
            e[0] = 1.0;
            e
        }
    };
    if direction.len() != d {
        return Err(bad(direction_key.into(), format!("expected {d} entries, found {}", direction.len())));
    }
    let domain = match cfg.opt_vec(&k("domain"))? {
        Some(v) if v.len() == 2 => (v[0], v[1]),
        Some(v) => return Err(bad(k("domain"), format!("expected [lo, hi], found {} entries", v.len()))),
        None => match kind {
            FamilyKind::GaussianMeanShift => (-10.0, 10.0),
            FamilyKind::GaussianPrecisionScale => (0.1, 10.0),
            FamilyKind::LinregTau => (0.0, 100.0),
            FamilyKind::ContaminationPath => (0.0, 0.99),
        },
    };
    let prior = if kind == FamilyKind::LinregTau { Some(scalar_prior(cfg, &k("prior"))?) } else { None };
    builtin_family(kind, FamilyParams { matrix, vector, direction, domain, prior }).at(section)
}

/// Utility for the control problem: kind = zero (dim), linear (c), quadratic
/// (q row-major, center) or neg_softplus (dim, weight).
pub fn utility(cfg: &Config, section: &str) -> Result<UtilityRef, CliError> {
    if !cfg.table(section)? {
        return Err(bad(section.into(), "missing required table"));
    }
    let kk = format!("{section}.kind");
    let k = |name: &str| format!("{section}.{name}");
    Ok(match cfg.str(&kk)?.as_str() {
        "zero" => Arc::new(ZeroUtility { d: cfg.usize(&k("dim"))? }),
        "linear" => Arc::new(LinearUtility::new(cfg.vec(&k("c"))?).at(&k("c"))?),
        "quadratic" => {
            let (d, q) = cfg.square(&k("q"))?;
            let center = vector_of_dim(cfg, &k("center"), d, true)?;
            Arc::new(QuadraticUtility::new(DMatrix::from_row_slice(d, d, &q), center).at(&k("q"))?)
        }
        "neg_softplus" => Arc::new(
            NegSoftplusUtility::new(cfg.usize(&k("dim"))?, cfg.f64_or(&k("weight"), 1.0)?).at(section)?,
        ),
        other => return Err(bad(kk, format!("unknown utility kind '{other}'"))),
    })
}
