//! Command implementations. Each returns the process exit status.

use std::path::{Path, PathBuf};

use serde::Serialize;
use specshare::closedform::detect_symmetric;
use specshare::iterative::{run_alg2, run_alg3, run_alg4, trace_table};
use specshare::model::{isr, rates};
use specshare::montecarlo::{run_realizations, ExperimentOutput, Outcome};
use specshare::report::fmt_f64;
use specshare::stackelberg::{solve_leader, NeSolver, SearchStats};
use specshare::subgame::{diagnostics, solve_ne, verify_ne, DiagnosticReport, NeCheck};
use specshare::{
    solve_symmetric, Algorithm, Error, ExperimentSpec, GainTensor, NetworkConfig, PowerProfile,
    SolveTrace, Table, TraceStatus,
};

use crate::config::{ConfigError, RunConfig};
use crate::figures::{self, Figure, ReproduceOptions};
use crate::output::OutputDir;

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    /// Converged, exact or closed-form result (and, for `reproduce`, every check passed).
    Ok = 0,
    /// Malformed or invalid configuration, bad arguments, or I/O failure.
    Config = 1,
    MaxIterations = 2,
    Oscillating = 3,
    /// ISR floors over budget, or no ISR-feasible leader strategy.
    InfeasibleIsr = 4,
    /// `reproduce` ran but at least one acceptance check failed.
    CheckFailed = 5,
}

impl Exit {
    pub fn code(self) -> i32 {
        self as i32
    }

    fn from_status(s: TraceStatus) -> Self {
        match s {
            TraceStatus::Converged => Exit::Ok,
            TraceStatus::Oscillating => Exit::Oscillating,
            TraceStatus::MaxIterations => Exit::MaxIterations,
        }
    }

    fn from_error(e: &Error) -> Self {
        match e {
            Error::InfeasibleIsr { .. } | Error::InfeasibleLeader { .. } => Exit::InfeasibleIsr,
            Error::ExperimentFailed { failed, infeasible, .. } if 2 * infeasible >= *failed => Exit::InfeasibleIsr,
            _ => Exit::Config,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ne,
    Se,
    Alg2,
    Alg3,
    Alg4,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Ne => "ne",
            Command::Se => "se",
            Command::Alg2 => "alg2",
            Command::Alg3 => "alg3",
            Command::Alg4 => "alg4",
        }
    }
}

/// Follower solver requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Auto,
    ClosedForm,
    Iterative,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub realizations: Option<usize>,
    pub solver: SolverChoice,
    pub csv_decimate: usize,
    pub threads: Option<usize>,
}

#[derive(Debug, Serialize)]
struct RunManifest {
    schema: u32,
    command: String,
    config_path: Option<String>,
    resolved: serde_json::Value,
    seed: u64,
    version: &'static str,
    started: String,
    finished: String,
    outputs: Vec<String>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn report(e: impl std::fmt::Display) -> Exit {
    eprintln!("error: {e}");
    Exit::Config
}

fn io_exit(e: std::io::Error) -> Exit {
    report(format!("writing output: {e}"))
}

fn finish(
    mut out: OutputDir,
    command: &str,
    config_path: Option<&Path>,
    resolved: serde_json::Value,
    seed: u64,
    started: String,
) -> Result<(), Exit> {
    let mut outputs = out.written().to_vec();
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        schema: 1,
        command: command.to_string(),
        config_path: config_path.map(|p| p.display().to_string()),
        resolved,
        seed,
        version: env!("CARGO_PKG_VERSION"),
        started,
        finished: now(),
        outputs,
    };
    out.write_json("manifest.json", &manifest).map_err(io_exit)
}

pub fn validate(path: &Path) -> Exit {
    match RunConfig::load(path) {
        Ok(cfg) => {
            let kind = match (&cfg.gains, cfg.realizations) {
                (Some(_), _) => "fixed channel".to_string(),
                (None, r) => format!("{} random realization(s)", r.unwrap_or(1)),
            };
            println!(
                "{}: ok ({} users, {} sub-channels, {kind})",
                path.display(),
                cfg.network.n_users(),
                cfg.network.n_subchannels()
            );
            Exit::Ok
        }
        Err(e) => report(format!("{}: {e}", path.display())),
    }
}

fn load(opts: &RunOptions) -> Result<RunConfig, Exit> {
    let mut cfg = RunConfig::load(&opts.config).map_err(|e| report(format!("{}: {e}", opts.config.display())))?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    cfg.search.seed = cfg.seed;
    if let Some(r) = opts.realizations {
        if cfg.gains.is_some() {
            return Err(report("--realizations needs a config with a random `channel`"));
        }
        cfg.realizations = Some(r);
    }
    cfg.validate().map_err(report)?;
    Ok(cfg)
}

fn need_pu_powers(cfg: &RunConfig) -> Result<Vec<Vec<f64>>, Exit> {
    cfg.pu_powers.clone().ok_or_else(|| {
        report(ConfigError {
            field: Some("pu_powers".into()),
            ..ConfigError::new("required by `ne`")
        })
    })
}

pub fn run(command: Command, opts: &RunOptions) -> Exit {
    let started = now();
    let cfg = match load(opts) {
        Ok(c) => c,
        Err(e) => return e,
    };
    let mut out = match OutputDir::create(&opts.out) {
        Ok(o) => o,
        Err(e) => return io_exit(e),
    };
    if let Err(e) = out.write_with("resolved_config.json", |w| {
        w.write_all(cfg.to_json().as_bytes())?;
        w.write_all(b"\n")
    }) {
        return io_exit(e);
    }
    let result = match cfg.gain_tensor() {
        Some(gains) => single(command, &cfg, &gains, opts, &mut out),
        None => ensemble(command, &cfg, opts, &mut out),
    };
    let exit = result.unwrap_or_else(|e| e);
    let resolved = serde_json::to_value(&cfg).expect("config serializes");
    match finish(out, command.name(), Some(&opts.config), resolved, cfg.seed, started) {
        Ok(()) => exit,
        Err(e) => e,
    }
}

fn powers_table(profile: &PowerProfile, config: &NetworkConfig) -> Table {
    let mut t = Table::new(["user", "role", "subchannel", "power"]);
    for i in 0..config.n_users() {
        let role = if config.is_pu(i) { "pu" } else { "su" };
        for f in 0..config.n_subchannels() {
            t.push(vec![i.to_string(), role.into(), f.to_string(), fmt_f64(profile.get(i, f))]);
        }
    }
    t
}

/// Worst ISR per PU (in `config.pus()` order).
fn worst_isr_per_pu(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> Vec<f64> {
    config
        .pus()
        .iter()
        .map(|&k| {
            isr(profile, gains, config, k)
                .map(|v| v.into_iter().fold(0.0, f64::max))
                .unwrap_or(f64::NAN)
        })
        .collect()
}

#[derive(Serialize)]
struct NeOutput {
    schema: u32,
    method: &'static str,
    converged: bool,
    iterations: usize,
    final_delta: f64,
    powers: Vec<Vec<f64>>,
    utilities: Vec<f64>,
    verify: NeCheck,
    diagnostics: DiagnosticReport,
}

#[derive(Serialize)]
struct SeOutput {
    schema: u32,
    pu_power: Vec<f64>,
    powers: Vec<Vec<f64>>,
    leader_utility: f64,
    follower_utilities: Vec<f64>,
    worst_isr: Vec<f64>,
    search_stats: SearchStats,
}

#[derive(Serialize)]
struct TraceSummary {
    schema: u32,
    algorithm: &'static str,
    status: TraceStatus,
    iterations: usize,
    converged_at: Option<usize>,
    powers: Vec<Vec<f64>>,
    utilities: Vec<f64>,
    worst_isr: Vec<f64>,
}

fn single(command: Command, cfg: &RunConfig, gains: &GainTensor, opts: &RunOptions, out: &mut OutputDir) -> Result<Exit, Exit> {
    let config = &cfg.network;
    let fail = |e: Error| {
        eprintln!("error: {e}");
        Exit::from_error(&e)
    };
    match command {
        Command::Ne => {
            let mut start = PowerProfile::for_config(config);
            for (row, &k) in need_pu_powers(cfg)?.iter().zip(config.pus()) {
                start.set_row(k, row);
            }
            let symmetric = opts.solver != SolverChoice::Iterative
                && detect_symmetric(&start, gains, config, cfg.symmetry_tol).is_ok();
            let (method, profile, converged, iterations, final_delta) = if opts.solver == SolverChoice::ClosedForm
                || symmetric
            {
                let (p, _) = solve_symmetric(&start, gains, config, cfg.symmetry_tol).map_err(fail)?;
                ("closed-form", p, true, 0, 0.0)
            } else {
                let r = solve_ne(&start, gains, config, &cfg.ne).map_err(fail)?;
                ("iterative", r.profile, r.converged, r.iterations, r.final_delta)
            };
            let verify = verify_ne(&profile, gains, config, 1e-7).map_err(fail)?;
            let diag = diagnostics(&profile, gains, config).map_err(fail)?;
            let result = NeOutput {
                schema: 1,
                method,
                converged,
                iterations,
                final_delta,
                powers: profile.to_rows(),
                utilities: rates(&profile, gains, config).map_err(fail)?.utilities,
                verify,
                diagnostics: diag,
            };
            out.write_json("ne.json", &result).map_err(io_exit)?;
            out.write_table("powers.csv", &powers_table(&profile, config)).map_err(io_exit)?;
            Ok(if converged { Exit::Ok } else { Exit::MaxIterations })
        }
        Command::Se => {
            let mut search = cfg.search.clone();
            search.solver = solver_for_search(opts.solver, search.solver);
            let se = solve_leader(gains, config, &search).map_err(fail)?;
            let result = SeOutput {
                schema: 1,
                pu_power: se.pu_power.clone(),
                powers: se.su_profile.to_rows(),
                leader_utility: se.leader_utility,
                follower_utilities: se.follower_utilities.clone(),
                worst_isr: worst_isr_per_pu(&se.su_profile, gains, config),
                search_stats: se.search_stats.clone(),
            };
            out.write_json("se.json", &result).map_err(io_exit)?;
            out.write_table("powers.csv", &powers_table(&se.su_profile, config)).map_err(io_exit)?;
            Ok(Exit::Ok)
        }
        Command::Alg2 | Command::Alg3 | Command::Alg4 => {
            let mut schedule = cfg.schedule.clone();
            match opts.solver {
                SolverChoice::ClosedForm => schedule.closed_form = true,
                SolverChoice::Iterative => schedule.closed_form = false,
                SolverChoice::Auto => {}
            }
            let runner = match command {
                Command::Alg2 => run_alg2,
                Command::Alg3 => run_alg3,
                _ => run_alg4,
            };
            let trace: SolveTrace = runner(gains, config, &schedule).map_err(fail)?;
            out.write_table("trace.csv", &trace_table(&trace, config, opts.csv_decimate.max(1)))
                .map_err(io_exit)?;
            let summary = TraceSummary {
                schema: 1,
                algorithm: command.name(),
                status: trace.status,
                iterations: trace.len(),
                converged_at: trace.converged_at,
                powers: trace.final_profile().to_rows(),
                utilities: trace.final_utilities().to_vec(),
                worst_isr: worst_isr_per_pu(trace.final_profile(), gains, config),
            };
            out.write_json("summary.json", &summary).map_err(io_exit)?;
            Ok(Exit::from_status(trace.status))
        }
    }
}

fn solver_for_search(choice: SolverChoice, configured: NeSolver) -> NeSolver {
    match choice {
        SolverChoice::Auto => configured,
        SolverChoice::ClosedForm => NeSolver::ClosedForm,
        SolverChoice::Iterative => NeSolver::Iterative,
    }
}

fn realizations_table(out: &ExperimentOutput, users: usize) -> Table {
    let mut header: Vec<String> = ["index", "outcome", "iterations", "converged_at", "worst_isr"]
        .into_iter()
        .map(String::from)
        .collect();
    header.extend((0..users).map(|u| format!("u{u}")));
    header.push("error".into());
    let mut t = Table::new(header);
    for r in &out.realizations {
        let mut row = vec![
            r.index.to_string(),
            r.outcome.as_str().to_string(),
            r.iterations.to_string(),
            r.converged_at.map(|c| c.to_string()).unwrap_or_default(),
            r.worst_isr.map(fmt_f64).unwrap_or_default(),
        ];
        if r.utilities.len() == users {
            row.extend(r.utilities.iter().map(|&u| fmt_f64(u)));
        } else {
            row.extend(std::iter::repeat(String::new()).take(users));
        }
        row.push(r.error.clone().unwrap_or_default());
        t.push(row);
    }
    t
}

/// Exit status of an ensemble: 0 when most realizations converged, otherwise
/// the code of the most common other outcome.
pub fn ensemble_exit(out: &ExperimentOutput) -> Exit {
    let count = |o: Outcome| out.report.outcome_counts.get(o.as_str()).copied().unwrap_or(0);
    if 2 * count(Outcome::Converged) > out.report.realizations {
        return Exit::Ok;
    }
    [
        (Outcome::Infeasible, Exit::InfeasibleIsr),
        (Outcome::Oscillating, Exit::Oscillating),
        (Outcome::MaxIterations, Exit::MaxIterations),
        (Outcome::Failed, Exit::Config),
        (Outcome::Converged, Exit::Ok),
    ]
    .into_iter()
    .max_by_key(|&(o, _)| count(o))
    .map(|(_, e)| e)
    .unwrap_or(Exit::Ok)
}

fn ensemble(command: Command, cfg: &RunConfig, opts: &RunOptions, out: &mut OutputDir) -> Result<Exit, Exit> {
    let algorithm = match (command, opts.solver) {
        (Command::Ne, SolverChoice::ClosedForm) => Algorithm::NeClosedForm,
        (Command::Ne, _) => Algorithm::NeIterative,
        (Command::Se, _) => Algorithm::Se,
        (Command::Alg2, _) => Algorithm::Alg2,
        (Command::Alg3, _) => Algorithm::Alg3,
        (Command::Alg4, _) => Algorithm::Alg4,
    };
    if command == Command::Ne {
        need_pu_powers(cfg)?;
    }
    let mut spec = ExperimentSpec {
        network: cfg.network.clone(),
        channel: cfg.channel.clone().expect("validated"),
        realizations: cfg.realizations.unwrap_or(1),
        seed: cfg.seed,
        algorithm,
        pu_powers: cfg.pu_powers.clone(),
        schedule: cfg.schedule.clone(),
        search: cfg.search.clone(),
        ne: cfg.ne,
    };
    spec.search.solver = solver_for_search(opts.solver, spec.search.solver);
    match opts.solver {
        SolverChoice::ClosedForm => spec.schedule.closed_form = true,
        SolverChoice::Iterative => spec.schedule.closed_form = false,
        SolverChoice::Auto => {}
    }
    let result = run_realizations(&spec, opts.threads).map_err(|e| {
        eprintln!("error: {e}");
        Exit::from_error(&e)
    })?;
    out.write_json("report.json", &result.report).map_err(io_exit)?;
    out.write_table("realizations.csv", &realizations_table(&result, cfg.network.n_users()))
        .map_err(io_exit)?;
    if let Some(curve) = &result.curve {
        out.write_table("curve.csv", curve).map_err(io_exit)?;
    }
    Ok(ensemble_exit(&result))
}

pub fn reproduce(figure: &str, out_dir: &Path, opts: ReproduceOptions) -> Exit {
    let started = now();
    let figure: Figure = match figure.parse() {
        Ok(f) => f,
        Err(e) => return report(e),
    };
    let mut out = match OutputDir::create(out_dir) {
        Ok(o) => o,
        Err(e) => return io_exit(e),
    };
    let result = match figures::reproduce(figure, opts) {
        Ok(r) => r,
        Err(e) => return report(e),
    };
    let write = |out: &mut OutputDir| -> std::io::Result<()> {
        for (name, spec) in &result.specs {
            out.write_json(&format!("{name}_spec.json"), spec)?;
        }
        for (name, table) in &result.tables {
            out.write_table(name, table)?;
        }
        out.write_json("summary.json", &result.summary)
    };
    if let Err(e) = write(&mut out) {
        return io_exit(e);
    }
    for c in &result.summary.checks {
        let label = c.criterion.map(|n| format!("criterion {n}")).unwrap_or_else(|| "check".into());
        println!(
            "{} {label}: {} = {} (target {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.observed,
            c.target
        );
    }
    let resolved = serde_json::json!({
        "figure": figure.id(),
        "realizations": result.summary.realizations,
    });
    if let Err(e) = finish(out, "reproduce", None, resolved, opts.seed, started) {
        return e;
    }
    if result.summary.pass {
        Exit::Ok
    } else {
        Exit::CheckFailed
    }
}
