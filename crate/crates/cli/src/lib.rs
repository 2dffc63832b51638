//! Command-line front end for `mfvi-core`: TOML run configurations, one subcommand
//! per library operation, canonical JSON reports and the oracle reproduction suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod oracle_check;
pub mod report;
pub mod specs;

use clap::{Parser, Subcommand};
use commands::{Ctx, Outcome};
use config::Config;
use error::CliError;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "MFVI_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "mfvi-out";

/// Every command accepted in the `command` key.
pub const COMMANDS: [&str; 10] = [
    "solve",
    "cavi",
    "stability",
    "sensitivity",
    "bvm",
    "linreg",
    "prior-swap",
    "contamination",
    "control",
    "oracle-check",
];

#[derive(Debug, Parser)]
#[command(name = "mfvi", version, about = "Mean-field variational inference over monotone transport maps")]
pub struct Cli {
    /// Output directory; overrides MFVI_OUTPUT_DIR and the config's output_dir.
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the command named by the config's `command` key.
    Run { config: PathBuf },
    /// Solve the lifted problem for one potential.
    Solve { config: PathBuf },
    /// Coordinate-ascent baseline for one potential.
    Cavi { config: PathBuf },
    /// Stability bounds for a pair of potentials.
    Stability { config: PathBuf },
    /// Derivative of the optimal map along a parametric family.
    Sensitivity { config: PathBuf },
    /// Bernstein-von Mises surrogate and bounds.
    Bvm { config: PathBuf },
    /// Likelihood-scale stability of the linear model.
    Linreg { config: PathBuf },
    /// Prior-swapping interval.
    PriorSwap { config: PathBuf },
    /// Epsilon-contamination bound.
    Contamination { config: PathBuf },
    /// Value stability of the mean-field control problem.
    Control { config: PathBuf },
    /// Reproduction suite against closed-form and brute-force oracles.
    OracleCheck { config: Option<PathBuf> },
}

impl Command {
    fn parts(&self) -> (Option<&'static str>, Option<&Path>) {
        match self {
            Self::Run { config } => (None, Some(config)),
            Self::Solve { config } => (Some("solve"), Some(config)),
            Self::Cavi { config } => (Some("cavi"), Some(config)),
            Self::Stability { config } => (Some("stability"), Some(config)),
            Self::Sensitivity { config } => (Some("sensitivity"), Some(config)),
            Self::Bvm { config } => (Some("bvm"), Some(config)),
            Self::Linreg { config } => (Some("linreg"), Some(config)),
            Self::PriorSwap { config } => (Some("prior-swap"), Some(config)),
            Self::Contamination { config } => (Some("contamination"), Some(config)),
            Self::Control { config } => (Some("control"), Some(config)),
            Self::OracleCheck { config } => (Some("oracle-check"), config.as_deref()),
        }
    }
}

/// What a successful run produced.
#[derive(Debug)]
pub struct RunOutput {
    pub command: String,
    pub report_path: PathBuf,
    pub report: Value,
    /// Text for standard output.
    pub stdout: String,
}

fn resolve_command(cfg: &Config, fixed: Option<&str>) -> Result<String, CliError> {
    let named = cfg.opt_str("command")?;
    let cmd = match (fixed, named) {
        (Some(f), Some(n)) if f != n => {
            return Err(CliError::Config {
                key: "command".into(),
                message: format!("config names '{n}' but the '{f}' subcommand was invoked"),
            })
        }
        (Some(f), _) => f.to_string(),
        (None, Some(n)) => n,
        (None, None) => return Err(CliError::Config { key: "command".into(), message: "missing required string".into() }),
    };
    if !COMMANDS.contains(&cmd.as_str()) {
        return Err(CliError::Config {
            key: "command".into(),
            message: format!("unknown command '{cmd}' (expected one of {})", COMMANDS.join(", ")),
        });
    }
    Ok(cmd)
}

fn resolve_output_dir(cfg: &Config, flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let from_cfg = cfg.opt_str("output_dir")?;
    if let Some(f) = flag {
        return Ok(f.to_path_buf());
    }
    if let Some(env) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return Ok(PathBuf::from(env));
    }
    Ok(PathBuf::from(from_cfg.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.to_string())))
}

fn check_threads(cfg: &Config) -> Result<(), CliError> {
    match cfg.opt_usize("threads")? {
        None | Some(1) => Ok(()),
        Some(n) => Err(CliError::Config {
            key: "threads".into(),
            message: format!("only single-threaded execution (threads = 1) is supported, got {n}"),
        }),
    }
}

/// Executes one invocation and writes its report; errors are returned, not printed.
pub fn execute(cli: &Cli) -> Result<RunOutput, CliError> {
    let (fixed, path) = cli.command.parts();
    let cfg = match path {
        Some(p) => Config::load(p)?,
        None => Config::empty(),
    };
    let command = resolve_command(&cfg, fixed)?;
    let out_dir = resolve_output_dir(&cfg, cli.output_dir.as_deref())?;
    check_threads(&cfg)?;
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let ctx = Ctx { cfg: &cfg, out_dir: &out_dir };

    let (outcome, table) = if command == "oracle-check" {
        let settings = oracle_check::Settings::from_config(&cfg)?;
        cfg.finish()?;
        let checks = oracle_check::run_checks(&settings)?;
        let fields = oracle_check::report_fields(&settings, &checks);
        (Outcome { fields, seed: settings.seed }, Some((oracle_check::table(&checks), checks)))
    } else {
        let f = match command.as_str() {
            "solve" => commands::solve,
            "cavi" => commands::cavi,
            "stability" => commands::stability,
            "sensitivity" => commands::sensitivity,
            "bvm" => commands::bvm,
            "linreg" => commands::linreg,
            "prior-swap" => commands::prior_swap,
            "contamination" => commands::contamination,
            _ => commands::control,
        };
        (f(&ctx)?, None)
    };

    let inputs = cfg.to_json();
    let mut report = outcome.fields;
    report.insert("command".into(), json!(command));
    report.insert("version".into(), json!(mfvi_core::VERSION));
    report.insert("config_hash".into(), json!(report::hash_value(&inputs)));
    report.insert("seed".into(), json!(outcome.seed));
    report.insert("inputs".into(), inputs);
    let report = Value::Object(report);
    let report_path = out_dir.join(format!("{command}.json"));
    report::write_json(&report_path, &report)?;

    let stdout = match table {
        Some((text, checks)) => {
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if !failed.is_empty() {
                print!("{text}");
                return Err(CliError::CheckFailed(failed.join(", ")));
            }
            text
        }
        None => report::canonical(&report),
    };
    Ok(RunOutput { command, report_path, report, stdout })
}

/// Runs the CLI and returns the process exit code. Errors are printed as JSON on
/// standard output and as text on standard error.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            0
        }
        Err(e) => {
            print!("{}", report::canonical(&e.to_json()));
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
