//! Reproduction suite: the lifted solver and CAVI against closed-form Gaussian
//! optima and the committed brute-force fixture of a 2-d logistic posterior.
//! The report holds no timings, so equal settings give byte-identical output.

use crate::config::Config;
use crate::error::{AtKey, CliError};
use crate::specs;
use mfvi_core::applications::GaussianProduct;
use mfvi_core::oracle::{
    brute_force_mfvi_2d, gaussian_mfvi, random_gaussian_suite, GaussianTarget, GridSpec,
    LogisticFixture,
};
use mfvi_core::potentials::Quadratic;
use mfvi_core::solver::{cavi_solve, solve_lifted, CaviConfig, SolverConfig};
use mfvi_core::transport::{lp_distance, TransportMap};
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::PathBuf;

/// The committed logistic fixture, used when no path is configured.
pub const EMBEDDED_FIXTURE: &str = include_str!("../../core/tests/fixtures/logistic_2d.json");

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const SUITE_SIZE: usize = 20;
pub const MAX_CONDITION: f64 = 20.0;
/// CAVI energy interpolation stride used by the suite unless `cavi.energy_stride` is set.
pub const DEFAULT_CAVI_STRIDE: usize = 8;

/// Tolerances of the individual checks.
pub const TOL_GAUSSIAN: f64 = 1e-2;
pub const TOL_CROSS: f64 = 5e-3;
pub const TOL_BRUTE_GAUSSIAN: f64 = 1e-4;

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn le(name: &str, value: f64, threshold: f64, detail: String) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold, detail }
    }

    fn failed(name: &str, threshold: f64, err: &dyn std::fmt::Display) -> Self {
        Self { name: name.into(), value: f64::NAN, threshold, pass: false, detail: format!("error: {err}") }
    }
}

/// Settings of the suite, all optional in the configuration.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub count: usize,
    pub solver: SolverConfig,
    pub cavi: CaviConfig,
    pub fixture: Option<PathBuf>,
}

impl Settings {
    pub fn from_config(c: &Config) -> Result<Self, CliError> {
        c.table("oracle_check")?;
        let solver = specs::solver_config(c)?;
        let cavi = specs::cavi_config(c, DEFAULT_CAVI_STRIDE)?;
        Ok(Self {
            seed: c.usize_or("oracle_check.seed", DEFAULT_SEED as usize)? as u64,
            count: c.usize_or("oracle_check.count", SUITE_SIZE)?,
            solver,
            cavi,
            fixture: c.opt_str("oracle_check.fixture")?.map(PathBuf::from),
        })
    }
}

fn product_map(nu: &GaussianProduct, like: &TransportMap) -> Result<TransportMap, mfvi_core::Error> {
    nu.to_map(like.grid().clone())
}

fn gaussian_checks(s: &Settings, out: &mut Vec<Check>) -> Result<(), CliError> {
    let suite = random_gaussian_suite(s.seed, s.count, 2..=6, MAX_CONDITION).at("oracle_check.seed")?;
    let (mut worst_oracle, mut worst_cavi) = (0.0f64, 0.0f64);
    let (mut arg_oracle, mut arg_cavi) = (0, 0);
    let mut errors = Vec::new();
    for (k, t) in suite.iter().enumerate() {
        let p = match Quadratic::new(t.precision.clone(), t.mean.clone()) {
            Ok(p) => p,
            Err(e) => {
                errors.push(format!("instance {k}: {e}"));
                continue;
            }
        };
        let run = || -> Result<(f64, f64), mfvi_core::Error> {
            let sol = solve_lifted(&p, &s.solver)?;
            let oracle = product_map(&gaussian_mfvi(t), &sol.map)?;
            let e_oracle = lp_distance(&sol.map, &oracle, 2.0)?;
            let cv = cavi_solve(&p, &CaviConfig { grid_m: s.solver.grid_m, ..s.cavi.clone() })?;
            let e_cavi = lp_distance(&sol.map, &cv.map, 2.0)?;
            Ok((e_oracle, e_cavi))
        };
        match run() {
            Ok((a, b)) => {
                if a > worst_oracle {
                    worst_oracle = a;
                    arg_oracle = k;
                }
                if b > worst_cavi {
                    worst_cavi = b;
                    arg_cavi = k;
                }
            }
            Err(e) => errors.push(format!("instance {k} (d={}): {e}", t.dim())),
        }
    }
    let note = |arg: usize| {
        if errors.is_empty() {
            format!("{} targets, d in 2..=6, condition <= {MAX_CONDITION}; worst instance {arg}", suite.len())
        } else {
            format!("errors: {}", errors.join("; "))
        }
    };
    let mut a = Check::le("gaussian_suite_lifted_vs_oracle", worst_oracle, TOL_GAUSSIAN, note(arg_oracle));
    let mut b = Check::le("gaussian_suite_cavi_vs_lifted", worst_cavi, TOL_CROSS, note(arg_cavi));
    if !errors.is_empty() {
        a.pass = false;
        b.pass = false;
    }
    out.push(a);
    out.push(b);
    Ok(())
}

fn brute_gaussian_check(out: &mut Vec<Check>) {
    let name = "brute_force_vs_gaussian_oracle";
    let run = || -> Result<f64, mfvi_core::Error> {
        let prec = nalgebra::DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mean = nalgebra::DVector::from_vec(vec![0.5, -0.25]);
        let p = Quadratic::new(prec.clone(), mean.clone())?;
        let bf = brute_force_mfvi_2d(&p, &GridSpec::around_mode(&p, 10.0)?)?;
        let nu = gaussian_mfvi(&GaussianTarget::new(mean, prec)?);
        let mut worst = 0.0f64;
        for (j, m) in bf.marginals.iter().enumerate() {
            worst = worst.max((m.mean() - nu.mean[j]).abs()).max((m.variance() - nu.std[j].powi(2)).abs());
        }
        Ok(worst)
    };
    out.push(match run() {
        Ok(v) => Check::le(name, v, TOL_BRUTE_GAUSSIAN, "max moment error, P = [[2,1],[1,2]]".into()),
        Err(e) => Check::failed(name, TOL_BRUTE_GAUSSIAN, &e),
    });
}

fn load_fixture(s: &Settings) -> Result<LogisticFixture, String> {
    match &s.fixture {
        Some(path) => LogisticFixture::load(path).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            let fx: LogisticFixture = serde_json::from_str(EMBEDDED_FIXTURE).map_err(|e| e.to_string())?;
            fx.verify().map_err(|e| e.to_string())?;
            Ok(fx)
        }
    }
}

fn logistic_checks(s: &Settings, out: &mut Vec<Check>) {
    let fx = match load_fixture(s) {
        Ok(fx) => {
            out.push(Check { name: "fixture_integrity".into(), value: 0.0, threshold: 0.0, pass: true, detail: fx.input_hash.clone() });
            fx
        }
        Err(e) => {
            out.push(Check { name: "fixture_integrity".into(), value: f64::NAN, threshold: 0.0, pass: false, detail: e.clone() });
            out.push(Check::failed("logistic_lifted_vs_fixture", TOL_CROSS, &"fixture unavailable"));
            out.push(Check::failed("logistic_cavi_vs_fixture", TOL_CROSS, &"fixture unavailable"));
            return;
        }
    };
    let p = match fx.inputs.potential() {
        Ok(p) => p,
        Err(e) => {
            out.push(Check::failed("logistic_lifted_vs_fixture", TOL_CROSS, &e));
            out.push(Check::failed("logistic_cavi_vs_fixture", TOL_CROSS, &e));
            return;
        }
    };
    let against = |t: &TransportMap| -> Result<f64, mfvi_core::Error> {
        let mut worst = 0.0f64;
        for (j, m) in fx.result.marginals.iter().enumerate() {
            worst = worst.max(m.w2_to_map(t, j)?);
        }
        Ok(worst)
    };
    let detail = format!("max 1-d W2 per marginal, {} grid points per axis", fx.inputs.grid.points);
    let lifted = solve_lifted(&p, &s.solver).and_then(|sol| against(&sol.map));
    out.push(match lifted {
        Ok(v) => Check::le("logistic_lifted_vs_fixture", v, TOL_CROSS, detail.clone()),
        Err(e) => Check::failed("logistic_lifted_vs_fixture", TOL_CROSS, &e),
    });
    let cv = cavi_solve(&p, &CaviConfig { grid_m: s.solver.grid_m, ..s.cavi.clone() }).and_then(|r| against(&r.map));
    out.push(match cv {
        Ok(v) => Check::le("logistic_cavi_vs_fixture", v, TOL_CROSS, detail),
        Err(e) => Check::failed("logistic_cavi_vs_fixture", TOL_CROSS, &e),
    });
}

/// Runs every check in a fixed order.
pub fn run_checks(s: &Settings) -> Result<Vec<Check>, CliError> {
    let mut out = Vec::new();
    gaussian_checks(s, &mut out)?;
    brute_gaussian_check(&mut out);
    logistic_checks(s, &mut out);
    Ok(out)
}

/// Plain-text pass/fail table.
pub fn table(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
    let mut s = format!("{:<w$}  {:<6}  {:>12}  {:>12}\n", "check", "result", "value", "threshold");
    for c in checks {
        s += &format!(
            "{:<w$}  {:<6}  {:>12.4e}  {:>12.4e}\n",
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.value,
            c.threshold
        );
    }
    s
}

/// Report fields of the suite.
pub fn report_fields(s: &Settings, checks: &[Check]) -> Map<String, Value> {
    let rows: Vec<Value> = checks
        .iter()
        .map(|c| {
            json!({
                "name": c.name,
                "value": if c.value.is_finite() { json!(c.value) } else { Value::Null },
                "threshold": c.threshold,
                "pass": c.pass,
                "detail": c.detail,
            })
        })
        .collect();
    let mut m = Map::new();
    m.insert("checks".into(), Value::Array(rows));
    m.insert("all_pass".into(), json!(checks.iter().all(|c| c.pass)));
    m.insert("suite_seed".into(), json!(s.seed));
    m.insert("suite_size".into(), json!(s.count));
    m
}
