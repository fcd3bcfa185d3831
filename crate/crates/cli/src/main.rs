mod artifacts;
mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biflow::experiments::{experiments, run_experiment, Table, Verdict};
use biflow::norms::{carleson_bmo_with, oscillation_bmo_with, xt_norm_with, NormSettings};
use biflow::solver::{solvers, Diagnostics, Termination};
use biflow::{snapshot, Error, Result};
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "biflow", version, about = "Numerical laboratory for u_t + Δ²u = ∇·F(∇u)")]
struct Cli {
    /// Worker threads for the parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Root directory for run directories; overrides the config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplies every experiment tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment, or a bare solve when none is configured.
    Run { config: PathBuf },
    /// Solve and store snapshots.
    Solve { config: PathBuf },
    /// BMO norms of a stored field.
    Norms {
        snapshot: PathBuf,
        #[arg(long = "R")]
        radius: f64,
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
    /// Registered experiments.
    Experiments {
        #[command(subcommand)]
        action: ExperimentsAction,
    },
}

#[derive(Subcommand, Debug)]
enum ExperimentsAction {
    List,
}

const EXIT_FAIL: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_RESOLUTION: u8 = 4;
const EXIT_BLOWUP: u8 = 5;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Resolution(_) | Error::NonConvergence(_) => EXIT_RESOLUTION,
        Error::Blowup(_) => EXIT_BLOWUP,
        _ => EXIT_CONFIG,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::Domain(_) => "domain",
        Error::UnsupportedOrder(_) => "unsupported_order",
        Error::Resolution(_) => "resolution",
        Error::NonConvergence(_) => "non_convergence",
        Error::Blowup(_) => "blowup",
        Error::Format(_) => "format",
        Error::Io(_) => "io",
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            report(&json!({ "error": "usage", "message": msg.trim(), "exit_code": EXIT_CONFIG }));
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            let code = exit_code(&err);
            report(&json!({ "error": error_kind(&err), "message": err.to_string(), "exit_code": code }));
            ExitCode::from(code)
        }
    }
}

fn report(value: &serde_json::Value) {
    let _ = writeln!(std::io::stderr(), "{value}");
}

fn emit(text: impl std::fmt::Display) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(cli, config)?;
            if cfg.experiment.is_some() {
                run(cli, &cfg)
            } else if cfg.solve.is_some() {
                solve(cli, &cfg)
            } else {
                Err(Error::config("config has neither [experiment] nor [solve]"))
            }
        }
        Command::Solve { config } => {
            let cfg = load(cli, config)?;
            if cfg.solve.is_none() {
                return Err(Error::config("`solve` needs a [solve] table"));
            }
            solve(cli, &cfg)
        }
        Command::Norms { snapshot, radius, stride } => norms(snapshot, *radius, *stride),
        Command::Experiments { action: ExperimentsAction::List } => {
            for (name, exp) in experiments().iter() {
                emit(format_args!("{name}\t{}", exp.describe()));
            }
            Ok(0)
        }
    }
}

fn load(cli: &Cli, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if !(cli.tolerance_scale > 0.0 && cli.tolerance_scale.is_finite()) {
        return Err(Error::config("--tolerance-scale must be positive"));
    }
    Ok(cfg)
}

fn run_dir(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf> {
    let root = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("runs"));
    let hash = artifacts::config_hash(&json!({ "config": cfg, "tolerance_scale": cli.tolerance_scale }))?;
    artifacts::create_run_dir(&root, &hash)
}

fn run(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let name = &cfg.experiment.as_ref().expect("checked by caller").name;
    let ctx = cfg.context(cli.tolerance_scale)?;
    let mut result = run_experiment(name, &ctx)?;
    if let serde_json::Value::Object(map) = &mut result.inputs {
        map.insert("config".into(), serde_json::to_value(cfg).map_err(|e| Error::Format(e.to_string()))?);
    }
    let dir = run_dir(cli, cfg)?;
    artifacts::write_result(&dir, &result)?;
    emit(json!({ "experiment": name, "verdict": result.verdict, "run_dir": dir.display().to_string() }));
    Ok(if result.verdict == Verdict::Fail { EXIT_FAIL } else { 0 })
}

fn solve(cli: &Cli, cfg: &RunConfig) -> Result<u8> {
    let spec = cfg.solve.as_ref().expect("checked by caller");
    let ctx = cfg.context(cli.tolerance_scale)?;
    let u0 = ctx.initial.sample(&ctx.grid, ctx.seed)?;
    let nl = cfg.nonlinearity.build()?;
    let outcome = solvers().get(&spec.method)?.solve(&u0, spec.horizon, nl, &cfg.solver)?;
    let traj = &outcome.trajectory;
    let dir = run_dir(cli, cfg)?;

    let wanted: Vec<f64> = if spec.snapshots.is_empty() { vec![spec.horizon] } else { spec.snapshots.clone() };
    let mut stored = Vec::new();
    for &t in &wanted {
        let i = nearest_node(traj.times(), t);
        let file = format!("state_{i:04}.bifl");
        snapshot::write(&dir.join(&file), &traj.fields()[i])?;
        stored.push(json!({ "requested": t, "time": traj.times()[i], "file": file }));
    }
    let sup = Table::new("trajectory")
        .column("t", traj.times().to_vec())
        .column("sup", traj.fields().iter().map(|f| f.sup_norm()).collect());
    artifacts::write_table(&dir, &sup)?;
    let norm = xt_norm_with(traj, spec.horizon, &cfg.solver.norm_settings()).ok();
    artifacts::write_json(
        &dir.join("diagnostics.json"),
        &json!({
            "config": cfg,
            "method": spec.method,
            "horizon": spec.horizon,
            "diagnostics": outcome.diagnostics,
            "xt_norm": norm,
            "snapshots": stored,
        }),
    )?;
    let code = match &outcome.diagnostics {
        Diagnostics::Picard(d) => match d.termination {
            Termination::Converged => 0,
            Termination::Blowup => EXIT_BLOWUP,
            Termination::MaxIters | Termination::Diverged => EXIT_RESOLUTION,
        },
        Diagnostics::Etd(_) => 0,
    };
    emit(json!({ "solve": spec.method, "exit_code": code, "run_dir": dir.display().to_string() }));
    if code != 0 {
        report(&json!({
            "error": if code == EXIT_BLOWUP { "blowup" } else { "non_convergence" },
            "message": "solve did not converge; diagnostics.json has the iterate history",
            "exit_code": code,
        }));
    }
    Ok(code)
}

fn nearest_node(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}

fn norms(path: &Path, radius: f64, stride: usize) -> Result<u8> {
    let field = snapshot::read(path)?;
    let settings = NormSettings::default().with_stride(stride);
    let osc = oscillation_bmo_with(&field, radius, &settings)?;
    let carl = carleson_bmo_with(&field, radius, &settings)?;
    let grid = field.grid();
    let out = json!({
        "snapshot": path.display().to_string(),
        "grid": { "dim": grid.dim(), "points_per_axis": grid.points_per_axis(), "box_length": grid.box_length() },
        "radius": radius,
        "sup": field.sup_norm(),
        "mean": field.mean(),
        "oscillation_bmo": osc,
        "carleson_bmo": carl,
    });
    emit(serde_json::to_string_pretty(&out).map_err(|e| Error::Format(e.to_string()))?);
    Ok(0)
}
