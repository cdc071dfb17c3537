//! Command-line driver. Exit codes: 0 success, 1 property failure, 2
//! configuration error, 3 numerical failure, 4 no periodic solution found.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::checks;
use crate::config::{ConfigError, RunConfig, SweepParameter};
use crate::diagnostics::{self, ConstraintReport, NormBundle};
use crate::dynamics::{self, ModelConfig};
use crate::io::{self, Manifest, Table};
use crate::periodic::{self, PeriodicError, PeriodicReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    PropertyFailure = 1,
    Config = 2,
    Numerical = 3,
    NotConverged = 4,
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> Self {
        ExitCode::from(e as u8)
    }
}

#[derive(Debug, Parser)]
#[command(name = "phasehyst", version, about = "Phase-field system with a hysteresis constraint: simulation, periodic solutions, sweeps and property checks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one period from the configured initial state.
    Simulate(RunArgs),
    /// Iterate the period map to a time-periodic solution.
    FindPeriodic(RunArgs),
    /// Periodic solutions and diagnostics over the configured sweep values.
    Sweep(RunArgs),
    /// Run a property suite.
    Check {
        #[arg(long, value_name = "NAME", default_value = "all")]
        suite: String,
        #[arg(long, value_name = "N", default_value_t = 0)]
        seed: u64,
        /// Directory for the results JSON; printed to stdout when absent.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Config(ConfigError::new("output.directory", format!("{}: {e}", path.display())))
}

struct Context {
    run: RunConfig,
    out: PathBuf,
    seed: u64,
}

impl Context {
    fn load(args: &RunArgs) -> Result<Self, Failure> {
        let run = RunConfig::load(&args.config)?;
        let out = args.out.clone().unwrap_or_else(|| run.output.directory.clone());
        fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
        let seed = args.seed.unwrap_or(run.seed);
        Ok(Context { run, out, seed })
    }

    fn model(&self) -> Result<ModelConfig, Failure> {
        let cfg = self.run.model()?;
        for w in cfg.warnings() {
            eprintln!("warning: {w}");
        }
        Ok(cfg)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T, files: &mut Vec<String>) -> Result<(), Failure> {
        if self.run.output.json {
            let path = self.out.join(name);
            io::write_json(&path, value).map_err(|e| io_failure(&path, e))?;
            files.push(name.into());
        }
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str, files: &mut Vec<String>) -> Result<(), Failure> {
        if self.run.output.csv {
            let path = self.out.join(name);
            fs::write(&path, text).map_err(|e| io_failure(&path, e))?;
            files.push(name.into());
        }
        Ok(())
    }

    fn manifest(&self, command: &str, cfg: &ModelConfig, mut files: Vec<String>) -> Result<(), Failure> {
        let mut m = Manifest::new(command, cfg.digest(), cfg.describe(), self.seed);
        m.warnings = cfg.warnings().to_vec();
        files.push("manifest.json".into());
        m.files = files;
        let path = self.out.join("manifest.json");
        io::write_json(&path, &m).map_err(|e| io_failure(&path, e))
    }
}

fn simulate(args: &RunArgs) -> Result<Exit, Failure> {
    let ctx = Context::load(args)?;
    let cfg = ctx.model()?;
    let z0 = ctx.run.initial_state(&cfg);
    let traj = dynamics::integrate(&z0, &cfg).map_err(|e| Failure::Numerical(e.to_string()))?;
    let mut files = Vec::new();
    ctx.write_text("trajectory.csv", &io::trajectory_csv(&traj, cfg.grid()), &mut files)?;
    ctx.manifest("simulate", &cfg, files)?;
    eprintln!("simulated {} steps, digest {}", cfg.steps(), cfg.digest());
    Ok(Exit::Ok)
}

#[derive(Debug, Serialize)]
struct PeriodicOutput<'a> {
    config_digest: &'a str,
    report: &'a PeriodicReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    schauder: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    constraint: Option<ConstraintReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    norms: Option<NormBundle>,
}

fn find_periodic(args: &RunArgs) -> Result<Exit, Failure> {
    let ctx = Context::load(args)?;
    let cfg = ctx.model()?;
    let z0 = ctx.run.initial_state(&cfg);
    let opts = ctx.run.solver_options();
    let mut files = Vec::new();
    let report = match periodic::find_periodic(&cfg, &z0, &opts) {
        Ok(r) => r,
        Err(PeriodicError::NotConverged(r)) => {
            let out = PeriodicOutput { config_digest: cfg.digest(), report: &r, schauder: None, constraint: None, norms: None };
            ctx.write_json("periodic_report.json", &out, &mut files)?;
            ctx.manifest("find-periodic", &cfg, files)?;
            eprintln!("not converged after {} iterations, residual {:e}", r.iterations, r.final_residual());
            return Ok(Exit::NotConverged);
        }
        Err(e) => return Err(Failure::Numerical(e.to_string())),
    };
    for w in report.warnings.iter().skip(cfg.warnings().len()) {
        eprintln!("warning: {w}");
    }
    let traj = dynamics::integrate(&report.final_state, &cfg).map_err(|e| Failure::Numerical(e.to_string()))?;
    let constraint = diagnostics::constraint_report(&traj, &cfg).map_err(|e| Failure::Numerical(e.to_string()))?;
    let norms = diagnostics::norm_bundle(&traj, &cfg);
    let schauder = if ctx.run.solver.schauder_check {
        Some(match periodic::schauder_outer(&cfg, &opts) {
            Ok((r, _)) => json!({
                "report": r,
                "sup_distance_to_picard": r.final_state.sup_distance(&report.final_state),
            }),
            Err(PeriodicError::NotConverged(r)) => json!({"report": r, "converged": false}),
            Err(e) => return Err(Failure::Numerical(e.to_string())),
        })
    } else {
        None
    };
    let out = PeriodicOutput {
        config_digest: cfg.digest(),
        report: &report,
        schauder,
        constraint: Some(constraint),
        norms: Some(norms),
    };
    ctx.write_json("periodic_report.json", &out, &mut files)?;
    ctx.write_text("periodic_trajectory.csv", &io::trajectory_csv(&traj, cfg.grid()), &mut files)?;
    ctx.manifest("find-periodic", &cfg, files)?;
    eprintln!(
        "converged in {} iterations, residual {:e}, c0 = {}",
        report.iterations,
        report.final_residual(),
        report.c0
    );
    Ok(Exit::Ok)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: &'static str,
    pub iterations: Option<usize>,
    pub residual: Option<f64>,
    pub constraint: Option<ConstraintReport>,
    pub norms: Option<NormBundle>,
    pub error: Option<String>,
}

/// One sweep point: periodic solve, re-integration and diagnostics.
pub fn sweep_point(run: &RunConfig, parameter: SweepParameter, value: f64) -> SweepRow {
    let mut row = SweepRow {
        value,
        status: "ok",
        iterations: None,
        residual: None,
        constraint: None,
        norms: None,
        error: None,
    };
    let cfg = match run.model_at(parameter, value) {
        Ok(c) => c,
        Err(e) => {
            row.status = "config_error";
            row.error = Some(e.to_string());
            return row;
        }
    };
    let z0 = run.initial_state(&cfg);
    let report = match periodic::find_periodic(&cfg, &z0, &run.solver_options()) {
        Ok(r) => r,
        Err(PeriodicError::NotConverged(r)) => {
            row.status = "not_converged";
            row.iterations = Some(r.iterations);
            row.residual = Some(r.final_residual());
            return row;
        }
        Err(e) => {
            row.status = "numerical_error";
            row.error = Some(e.to_string());
            return row;
        }
    };
    row.iterations = Some(report.iterations);
    row.residual = Some(report.final_residual());
    match dynamics::integrate(&report.final_state, &cfg) {
        Ok(traj) => {
            match diagnostics::constraint_report(&traj, &cfg) {
                Ok(c) => row.constraint = Some(c),
                Err(e) => row.error = Some(e.to_string()),
            }
            row.norms = Some(diagnostics::norm_bundle(&traj, &cfg));
        }
        Err(e) => {
            row.status = "numerical_error";
            row.error = Some(e.to_string());
        }
    }
    row
}

pub fn sweep_table(parameter: SweepParameter, rows: &[SweepRow]) -> Table {
    let mut cols = vec![
        parameter.name().to_string(),
        "status".into(),
        "iterations".into(),
        "residual".into(),
        "sup_upper_violation".into(),
        "sup_lower_violation".into(),
        "vi_max_positive".into(),
    ];
    cols.extend(NormBundle::FIELDS.iter().map(|s| s.to_string()));
    cols.push("error".into());
    let mut t = Table::new(cols);
    let opt = |x: Option<f64>| x.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        let mut cells = vec![
            r.value.to_string(),
            r.status.to_string(),
            r.iterations.map(|k| k.to_string()).unwrap_or_default(),
            opt(r.residual),
            opt(r.constraint.map(|c| c.sup_upper_violation)),
            opt(r.constraint.map(|c| c.sup_lower_violation)),
            opt(r.constraint.map(|c| c.vi_max_positive)),
        ];
        match r.norms {
            Some(n) => cells.extend(n.values().iter().map(|x| x.to_string())),
            None => cells.extend(std::iter::repeat_n(String::new(), NormBundle::FIELDS.len())),
        }
        cells.push(r.error.clone().unwrap_or_default());
        t.push(cells);
    }
    t
}

fn sweep(args: &RunArgs) -> Result<Exit, Failure> {
    let ctx = Context::load(args)?;
    let spec = ctx
        .run
        .sweep
        .clone()
        .ok_or_else(|| ConfigError::new("sweep", "the sweep command needs a `sweep` block"))?;
    let cfg = ctx.model()?;
    let rows: Vec<SweepRow> = spec
        .values
        .par_iter()
        .map(|&v| sweep_point(&ctx.run, spec.parameter, v))
        .collect();
    let mut files = Vec::new();
    let table = sweep_table(spec.parameter, &rows);
    ctx.write_text("sweep.csv", &table.to_csv(cfg.digest()), &mut files)?;
    ctx.write_json(
        "sweep.json",
        &json!({"config_digest": cfg.digest(), "parameter": spec.parameter, "rows": rows}),
        &mut files,
    )?;
    ctx.manifest("sweep", &cfg, files)?;
    for r in &rows {
        eprintln!("{} = {}: {}", spec.parameter.name(), r.value, r.status);
    }
    Ok(Exit::Ok)
}

fn check(suite: &str, seed: u64, out: Option<&Path>) -> Result<Exit, Failure> {
    let report = checks::run_suite(suite, seed).map_err(|e| Failure::Config(ConfigError::new("--suite", e.to_string())))?;
    for c in &report.checks {
        eprintln!("{} {}", if c.passed { "PASS" } else { "FAIL" }, c.name);
    }
    match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
            let path = dir.join(format!("check_{suite}.json"));
            io::write_json(&path, &report).map_err(|e| io_failure(&path, e))?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report).expect("report serializes")),
    }
    Ok(if report.passed { Exit::Ok } else { Exit::PropertyFailure })
}

pub fn run(cli: Cli) -> Exit {
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::FindPeriodic(a) => find_periodic(a),
        Command::Sweep(a) => sweep(a),
        Command::Check { suite, seed, out } => check(suite, *seed, out.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            Exit::Config
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: numerical failure: {msg}");
            Exit::Numerical
        }
    }
}

/// Parses `args` and runs; usage errors map to exit code 2.
pub fn main_with<I, T>(args: I) -> Exit
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                Exit::Config
            } else {
                Exit::Ok
            }
        }
    }
}
