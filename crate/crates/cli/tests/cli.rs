//! End-to-end runs of the `mfvi` binary: reports, exit codes and output-dir precedence.

use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mfvi(args: &[&str], out: Option<&Path>, env_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mfvi"));
    cmd.args(args).env_remove("MFVI_OUTPUT_DIR");
    if let Some(o) = out {
        cmd.arg("--output-dir").arg(o);
    }
    if let Some(e) = env_dir {
        cmd.env("MFVI_OUTPUT_DIR", e);
    }
    cmd.output().expect("mfvi binary runs")
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn assert_config_error(o: &Output, key: &str) {
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let e = &stdout_json(o)["error"];
    assert_eq!(e["exit_code"], 3);
    assert_eq!(e["key"], key, "{e}");
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn solve_example_recovers_gaussian_marginals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("solve_gaussian.toml");
    let o = mfvi(&["solve", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout_json(&o);
    for s in report["marginal_stds"].as_array().unwrap() {
        assert!((s.as_f64().unwrap() - 0.5f64.sqrt()).abs() < 1e-3, "{s}");
    }
    assert_eq!(report["command"], "solve");
    assert_eq!(report["seed"], 7);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    let file = std::fs::read(tmp.path().join("solve.json")).unwrap();
    assert_eq!(file, o.stdout);
    assert!(tmp.path().join("solve_map.csv").exists());
}

#[test]
fn stability_example_is_tight() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("stability_mean_shift.toml");
    let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["command"], "stability");
    assert!((r["bound_w2"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let m = r["measured_w2"].as_f64().unwrap();
    assert!((0.475..=0.5).contains(&m), "{m}");
}

#[test]
fn every_example_config_runs() {
    for name in [
        "cavi_gaussian",
        "sensitivity_mean_shift",
        "sensitivity_precision_scale",
        "bvm_softplus",
        "linreg",
        "prior_swap",
        "contamination",
        "control",
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = configs().join(format!("{name}.toml"));
        let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
        assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stdout));
        let r = stdout_json(&o);
        let cmd = r["command"].as_str().unwrap();
        assert!(tmp.path().join(format!("{cmd}.json")).exists(), "{name}");
    }
}

#[test]
fn malformed_value_names_its_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"solve\"\n[potential]\nkind = \"gaussian\"\nprecision = [2.0, 1.0, 1.0]\n",
    );
    let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert_config_error(&o, "potential.precision");
    assert_eq!(stdout_json(&o)["error"]["kind"], "config");
}

#[test]
fn wrong_type_and_bad_syntax_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "command = \"solve\"\n[potential]\nkind = \"isotropic\"\ndim = \"two\"\n");
    assert_config_error(&mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None), "potential.dim");

    let cfg = write_config(tmp.path(), "command = \"solve\"\n[potential\n");
    let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"solve\"\n[potential]\nkind = \"isotropic\"\ndim = 2\nsigmaa = 1.0\n",
    );
    assert_config_error(&mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None), "potential.sigmaa");
}

#[test]
fn only_single_thread_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "command = \"solve\"\n[potential]\nkind = \"isotropic\"\ndim = 1\n";
    let cfg = write_config(tmp.path(), &format!("threads = 4\n{body}"));
    assert_config_error(&mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None), "threads");
    let cfg = write_config(tmp.path(), &format!("threads = 1\n{body}"));
    assert!(mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None).status.success());
}

#[test]
fn conflicting_command_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "command = \"cavi\"\n[potential]\nkind = \"isotropic\"\ndim = 1\n");
    assert_config_error(&mfvi(&["solve", cfg.to_str().unwrap()], Some(tmp.path()), None), "command");
}

#[test]
fn domain_error_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"solve\"\n[potential]\nkind = \"gaussian\"\nprecision = [1.0, 2.0, 2.0, 1.0]\n",
    );
    let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout_json(&o)["error"]["key"], "potential.precision");
}

#[test]
fn non_convergence_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "command = \"solve\"\n[potential]\nkind = \"softplus_perturbed\"\nprecision = [2.0, 1.0, 1.0, 2.0]\n\
         weight = 2.0\n[solver]\nmax_iters = 1\ntol = 1e-15\nmc_samples = 2000\n",
    );
    let o = mfvi(&["run", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(stdout_json(&o)["error"]["kind"], "convergence");
}

#[test]
fn output_dir_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let (from_cfg, from_env, from_flag) = (tmp.path().join("cfg"), tmp.path().join("env"), tmp.path().join("flag"));
    let cfg = write_config(
        tmp.path(),
        &format!(
            "command = \"solve\"\noutput_dir = {:?}\n[potential]\nkind = \"isotropic\"\ndim = 1\n[solver]\nmc_samples = 2000\n",
            from_cfg.to_str().unwrap()
        ),
    );
    let path = cfg.to_str().unwrap();

    assert!(mfvi(&["run", path], None, None).status.success());
    assert!(from_cfg.join("solve.json").exists());

    assert!(mfvi(&["run", path], None, Some(&from_env)).status.success());
    assert!(from_env.join("solve.json").exists());

    assert!(mfvi(&["run", path], Some(&from_flag), Some(&from_env)).status.success());
    assert!(from_flag.join("solve.json").exists());
}

#[test]
fn config_hash_ignores_output_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let body = "command = \"solve\"\n[potential]\nkind = \"isotropic\"\ndim = 1\n[solver]\nmc_samples = 2000\n";
    let a = write_config(tmp.path(), &format!("output_dir = \"a\"\n{body}"));
    let ra = stdout_json(&mfvi(&["run", a.to_str().unwrap()], Some(tmp.path()), None));
    let b = write_config(tmp.path(), &format!("output_dir = \"b\"\n{body}"));
    let rb = stdout_json(&mfvi(&["run", b.to_str().unwrap()], Some(tmp.path()), None));
    assert_eq!(ra["config_hash"], rb["config_hash"]);
}

#[test]
fn warm_start_from_map_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("solve_gaussian.toml");
    let first = tmp.path().join("first");
    assert!(mfvi(&["solve", cfg.to_str().unwrap()], Some(&first), None).status.success());
    let sidecar: Value = serde_json::from_slice(&std::fs::read(first.join("solve_map.json")).unwrap()).unwrap();
    assert!(sidecar["iterations"].as_u64().unwrap() > 0);

    let map = first.join("solve_map.csv");
    let warm = write_config(
        tmp.path(),
        &format!(
            "command = \"solve\"\n[potential]\nkind = \"gaussian\"\nprecision = [2.0, 1.0, 1.0, 2.0]\n\
             [solver]\nseed = 7\ninit = \"file\"\ninit_file = {:?}\n",
            map.to_str().unwrap()
        ),
    );
    let o = mfvi(&["run", warm.to_str().unwrap()], Some(&tmp.path().join("warm")), None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let r = stdout_json(&o);
    assert!(r["iterations"].as_u64().unwrap() <= sidecar["iterations"].as_u64().unwrap());
    assert!((r["elbo"].as_f64().unwrap() - sidecar["elbo"].as_f64().unwrap()).abs() < 1e-8);

    let missing = write_config(
        tmp.path(),
        "command = \"solve\"\n[potential]\nkind = \"isotropic\"\ndim = 2\n[solver]\ninit = \"file\"\ninit_file = \"nope.csv\"\n",
    );
    assert_config_error(&mfvi(&["run", missing.to_str().unwrap()], Some(tmp.path()), None), "solver.init_file");
}

#[test]
fn corrupted_fixture_fails_the_named_check() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/logistic_2d.json");
    let mut v: Value = serde_json::from_slice(&std::fs::read(fixture).unwrap()).unwrap();
    let ridge = v["inputs"]["ridge"].as_f64().unwrap();
    v["inputs"]["ridge"] = serde_json::json!(ridge * 2.0);
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&v).unwrap()).unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!(
            "[oracle_check]\ncount = 1\nfixture = {:?}\n[solver]\nmc_samples = 2000\n[cavi]\nmc_samples = 512\ngrid_points = 129\n",
            bad.to_str().unwrap()
        ),
    );
    let o = mfvi(&["oracle-check", cfg.to_str().unwrap()], Some(tmp.path()), None);
    assert_eq!(o.status.code(), Some(1));
    let table = String::from_utf8_lossy(&o.stdout);
    let row = table.lines().find(|l| l.starts_with("fixture_integrity")).expect("table row");
    assert!(row.contains("FAIL"), "{table}");
    let report: Value = serde_json::from_slice(&std::fs::read(tmp.path().join("oracle-check.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], false);
}
