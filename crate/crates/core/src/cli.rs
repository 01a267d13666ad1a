//! Command-line front end. Exit codes: 0 ok, 1 validation or usage,
//! 2 solver failure, 3 I/O.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{analyze, AnalysisError};
use crate::config::{parse_config, parse_recording, recording_label, ConfigError, ParsedConfig};
use crate::export::{format_f64, write_trajectory_csv};
use crate::lln::{convergence_study, rate_fit, LlnError, LlnStudyConfig};
use crate::model::ContinuousState;
use crate::ode::{integrate, OdeConfig, OdeError, OdeMethod};
use crate::stochastic::{scale, simulate, Recording, SimConfig, SimError};
use crate::table1::run_table1;

#[derive(Debug, Parser)]
#[command(
    name = "patchsis",
    version,
    about = "SIS epidemics on networks of patches"
)]
pub struct Cli {
    /// Worker threads for replicate and table-row parallelism (0 = all cores).
    #[arg(long, global = true, env = "PATCHSIS_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a configuration file.
    Validate(CommonArgs),
    /// Print the normalised configuration.
    Echo { config: PathBuf },
    /// Stochastic simulation.
    Sim(SimArgs),
    /// Deterministic limit.
    Ode(OdeArgs),
    /// Threshold and equilibrium analysis.
    Analyze(AnalyzeArgs),
    /// Convergence of scaled simulations to the ODE.
    Lln(LlnArgs),
    /// Two-patch prevalence table.
    Table1 {
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// every | final | grid:<dt>
    #[arg(long)]
    pub record: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OdeArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Fixed-step RK4 with this step.
    #[arg(long, conflicts_with = "adaptive")]
    pub dt: Option<f64>,
    /// Adaptive Dormand-Prince (default).
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long)]
    pub record_dt: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    pub config: PathBuf,
    /// Overrides `initial.mass`.
    #[arg(long)]
    pub mass: Option<f64>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LlnArgs {
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub pops: Option<Vec<u64>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub grid_dt: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Solver(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "validation error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
            CliError::Io(m) => write!(f, "io error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) | SimError::InvalidState(_) => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<OdeError> for CliError {
    fn from(e: OdeError) -> Self {
        match e {
            OdeError::InvalidConfig(_)
            | OdeError::InvalidState(_)
            | OdeError::UnequalDiffusion { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidInput(_) => CliError::Validation(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

impl From<LlnError> for CliError {
    fn from(e: LlnError) -> Self {
        match e {
            LlnError::InvalidConfig(_) => CliError::Validation(e.to_string()),
            LlnError::Ode(o) => o.into(),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn required<T>(v: Option<T>, flag: &str, section: &str) -> Result<T, CliError> {
    v.ok_or_else(|| {
        CliError::Validation(format!(
            "{flag} not given and not set in the {section} section"
        ))
    })
}

fn initial_state(cfg: &ParsedConfig) -> Result<ContinuousState, CliError> {
    cfg.initial
        .clone()
        .ok_or_else(|| CliError::Validation("config has no initial section".into()))
}

fn write_json(path: &Option<PathBuf>, doc: &Value) -> Result<(), CliError> {
    if let Some(p) = path {
        let text = serde_json::to_string_pretty(doc).expect("json document serialises");
        std::fs::write(p, text + "\n").map_err(|e| io_err(p, e))?;
    }
    Ok(())
}

fn document(
    command: &str,
    hash: Option<&str>,
    results: impl Serialize,
    diagnostics: Value,
) -> Value {
    json!({
        "command": command,
        "config_hash": hash,
        "results": results,
        "diagnostics": diagnostics,
    })
}

/// Runs a parsed command line, printing a human summary to stdout.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let threads = cli.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli.command))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(a) => cmd_validate(a),
        Command::Echo { config } => {
            let cfg = parse_config(&config)?;
            println!("{}", cfg.raw.to_json_pretty());
            Ok(())
        }
        Command::Sim(a) => cmd_sim(a),
        Command::Ode(a) => cmd_ode(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Lln(a) => cmd_lln(a),
        Command::Table1 { json } => cmd_table1(json),
    }
}

fn cmd_validate(a: CommonArgs) -> Result<(), CliError> {
    let cfg = parse_config(&a.config)?;
    println!(
        "ok: {} patches, nu_s = {}, nu_i = {}, mass = {}, config hash {}",
        cfg.model.ell(),
        cfg.model.nu_s(),
        cfg.model.nu_i(),
        cfg.mass,
        cfg.config_hash
    );
    let results = json!({
        "patches": cfg.model.ell(),
        "mass": cfg.mass,
        "config": cfg.raw,
    });
    write_json(
        &a.json,
        &document("validate", Some(&cfg.config_hash), results, Value::Null),
    )
}

fn cmd_sim(a: SimArgs) -> Result<(), CliError> {
    let cfg = parse_config(&a.config)?;
    let sec = cfg.raw.sim.clone().unwrap_or_default();
    let n = required(a.n.or(sec.population_n), "--n", "sim")?;
    let t_max = required(a.tmax.or(sec.t_max), "--tmax", "sim")?;
    let seed = required(a.seed.or(sec.seed), "--seed", "sim")?;
    let recording = match a.record.or(sec.recording) {
        Some(spec) => parse_recording(&spec).map_err(CliError::Validation)?,
        None => Recording::EveryEvent,
    };
    let x0 = initial_state(&cfg)?;
    let sim_cfg = SimConfig {
        population_n: n,
        t_max,
        seed,
        recording,
    };
    let traj = simulate(&cfg.model, &x0, &sim_cfg)?;
    let scaled = scale(&traj, n);
    let meta = vec![
        ("seed".to_string(), seed.to_string()),
        ("N".to_string(), n.to_string()),
        ("config_hash".to_string(), cfg.config_hash.clone()),
        ("t_max".to_string(), format_f64(t_max)),
        ("recording".to_string(), recording_label(&recording)),
        ("events".to_string(), traj.event_count.to_string()),
        ("absorbed".to_string(), traj.absorbed.to_string()),
    ];
    write_trajectory_csv(&scaled, &a.out, &meta).map_err(|e| io_err(&a.out, e))?;
    println!(
        "sim: {} events, {} records, absorbed = {}, final t = {} -> {}",
        traj.event_count,
        traj.len(),
        traj.absorbed,
        traj.times.last().copied().unwrap_or(0.0),
        a.out.display()
    );
    let last = traj.state(traj.len() - 1);
    let results = json!({
        "population_n": n,
        "t_max": t_max,
        "seed": seed,
        "recording": recording_label(&recording),
        "events": traj.event_count,
        "records": traj.len(),
        "absorbed": traj.absorbed,
        "final_state": {"s": last.s, "i": last.i},
        "output": a.out,
    });
    write_json(
        &a.json,
        &document("sim", Some(&cfg.config_hash), results, Value::Null),
    )
}

fn cmd_ode(a: OdeArgs) -> Result<(), CliError> {
    let cfg = parse_config(&a.config)?;
    let sec = cfg.raw.ode.clone().unwrap_or_default();
    let t_max = required(a.tmax.or(sec.t_max), "--tmax", "ode")?;
    let method = match (a.dt, a.adaptive) {
        (Some(dt), _) => OdeMethod::Rk4Fixed { dt },
        (None, true) => sec
            .method
            .filter(|m| matches!(m, OdeMethod::Rk45Adaptive { .. }))
            .unwrap_or_default(),
        (None, false) => sec.method.unwrap_or_default(),
    };
    let record_dt =
        a.record_dt
            .or(sec.record_dt)
            .unwrap_or(if t_max > 0.0 { t_max / 200.0 } else { 1.0 });
    let ode_cfg = OdeConfig {
        t_max,
        method,
        record_dt,
    };
    let z0 = initial_state(&cfg)?;
    let traj = integrate(&cfg.model, &z0, &ode_cfg)?;
    let method_label = serde_json::to_string(&method).expect("method serialises");
    let meta = vec![
        ("seed".to_string(), "none".to_string()),
        ("N".to_string(), "inf".to_string()),
        ("config_hash".to_string(), cfg.config_hash.clone()),
        ("t_max".to_string(), format_f64(t_max)),
        ("method".to_string(), method_label),
        ("record_dt".to_string(), format_f64(record_dt)),
    ];
    write_trajectory_csv(&traj, &a.out, &meta).map_err(|e| io_err(&a.out, e))?;
    let fin = traj.final_state();
    println!(
        "ode: {} steps ({} rejected), {} records, final mass {} -> {}",
        traj.steps,
        traj.rejected_steps,
        traj.len(),
        fin.mass(),
        a.out.display()
    );
    let results = json!({
        "t_max": t_max,
        "method": method,
        "record_dt": record_dt,
        "records": traj.len(),
        "final_state": fin,
        "final_mass": fin.mass(),
        "output": a.out,
    });
    let diag = json!({"steps": traj.steps, "rejected_steps": traj.rejected_steps});
    write_json(
        &a.json,
        &document("ode", Some(&cfg.config_hash), results, diag),
    )
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let cfg = parse_config(&a.config)?;
    let mass = a.mass.unwrap_or(cfg.mass);
    let report = analyze(&cfg.model, mass)?;
    println!("R0 = {:.12} ({:?})", report.r0, report.r0_method);
    println!("alpha(B + V) = {:.6e}", report.alpha_b_plus_v);
    println!("N* = {:?}", report.n_star);
    match (&report.ee, &report.ee_prevalences) {
        (Some(ee), Some(p)) => {
            println!("endemic equilibrium s = {:?}", ee.s);
            println!("endemic equilibrium i = {:?}", ee.i);
            println!("prevalences = {p:?}");
        }
        _ => println!("no endemic equilibrium (disease-free state is the attractor)"),
    }
    if let Some(m) = report.stability_modulus_at_ee {
        println!("stability modulus at EE = {m:.6e}");
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    let diag = serde_json::to_value(&report.solver_diagnostics).expect("diagnostics serialise");
    write_json(
        &a.json,
        &document("analyze", Some(&cfg.config_hash), &report, diag),
    )
}

fn cmd_lln(a: LlnArgs) -> Result<(), CliError> {
    let cfg = parse_config(&a.config)?;
    let sec = cfg.raw.lln.clone().unwrap_or_default();
    let study = LlnStudyConfig {
        populations: required(a.pops.or(sec.populations), "--pops", "lln")?,
        replicates: required(a.replicates.or(sec.replicates), "--replicates", "lln")?,
        t_max: required(a.tmax.or(sec.t_max), "--tmax", "lln")?,
        grid_dt: a.grid_dt.or(sec.grid_dt),
        master_seed: required(a.seed.or(sec.master_seed), "--seed", "lln")?,
    };
    let x0 = initial_state(&cfg)?;
    let result = convergence_study(&cfg.model, &x0, &study)?;
    let fit = rate_fit(&result).ok();

    let file = File::create(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# seed={}", study.master_seed)?;
        writeln!(w, "# replicates={}", study.replicates)?;
        writeln!(w, "# config_hash={}", cfg.config_hash)?;
        writeln!(w, "# t_max={}", format_f64(study.t_max))?;
        writeln!(w, "# grid_dt={}", format_f64(result.grid_dt))?;
        writeln!(w, "N,completed,failed,median,mean,max")?;
        for ag in &result.aggregates {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                ag.population_n,
                ag.completed,
                ag.failed,
                format_f64(ag.median),
                format_f64(ag.mean),
                format_f64(ag.max)
            )?;
        }
        w.flush()
    };
    write(&mut w).map_err(|e| io_err(&a.out, e))?;

    for ag in &result.aggregates {
        println!(
            "N = {:>10}: median sup error {:.4e}, mean {:.4e}, max {:.4e} ({} ok, {} failed)",
            ag.population_n, ag.median, ag.mean, ag.max, ag.completed, ag.failed
        );
    }
    if let Some(f) = &fit {
        println!("log-log slope {:.3}", f.slope);
    }
    let results = json!({
        "study": study,
        "aggregates": result.aggregates,
        "cells": result.cells,
        "output": a.out,
    });
    write_json(
        &a.json,
        &document(
            "lln",
            Some(&cfg.config_hash),
            results,
            json!({"rate_fit": fit}),
        ),
    )
}

fn cmd_table1(json_path: Option<PathBuf>) -> Result<(), CliError> {
    let report = run_table1();
    print!("{}", report.render());
    write_json(
        &json_path,
        &document(
            "table1",
            None,
            &report,
            json!({"all_within_tolerance": report.all_within_tolerance}),
        ),
    )
}

/// Parses `args`, runs, reports and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("patchsis: {e}");
            e.exit_code()
        }
    }
}
