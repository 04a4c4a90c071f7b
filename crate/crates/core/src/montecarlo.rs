//! Monte Carlo experiments: draw a channel per realization, run one solver,
//! and average.
//!
//! Realizations run in parallel but are reduced in index order, so results do
//! not depend on the worker count.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{draw_gains, ChannelModel};
use crate::closedform::{solve_symmetric, DEFAULT_SYMMETRY_TOL};
use crate::error::{Error, Result};
use crate::iterative::{run_alg2, run_alg3, run_alg4, IterationSchedule, SolveTrace, TraceStatus};
use crate::model::{utilities_unchecked, worst_isr, GainTensor, NetworkConfig, PowerProfile};
use crate::report::{fmt_f64, Table};
use crate::stackelberg::{solve_leader, SearchSpec};
use crate::subgame::{sweep, NeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NeClosedForm,
    NeIterative,
    Se,
    Alg2,
    Alg3,
    Alg4,
}

impl Algorithm {
    fn needs_pu_powers(self) -> bool {
        matches!(self, Algorithm::NeClosedForm | Algorithm::NeIterative)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub network: NetworkConfig,
    pub channel: ChannelModel,
    pub realizations: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Fixed PU rows (in `network.pus()` order) for the follower-only algorithms.
    #[serde(default)]
    pub pu_powers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub schedule: IterationSchedule,
    #[serde(default)]
    pub search: SearchSpec,
    #[serde(default)]
    pub ne: NeOptions,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        self.channel.validate(&self.network)?;
        self.schedule.validate(&self.network)?;
        self.search.validate()?;
        if !(self.ne.tol > 0.0) || self.ne.max_iter == 0 {
            return Err(Error::config("ne", "tol must be positive and max_iter at least 1"));
        }
        let n = self.network.n_subchannels();
        match (&self.pu_powers, self.algorithm.needs_pu_powers()) {
            (None, true) => return Err(Error::config("pu_powers", "required by this algorithm")),
            (Some(rows), _) => {
                if rows.len() != self.network.pus().len() {
                    return Err(Error::config(
                        "pu_powers",
                        format!("expected {} rows, got {}", self.network.pus().len(), rows.len()),
                    ));
                }
                for (r, row) in rows.iter().enumerate() {
                    if row.len() != n || row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                        return Err(Error::config(
                            format!("pu_powers[{r}]"),
                            format!("expected {n} finite nonnegative powers"),
                        ));
                    }
                }
            }
            _ => {}
        }
        let one_pu = self.network.pus().len() == 1;
        match self.algorithm {
            Algorithm::Se | Algorithm::Alg2 | Algorithm::Alg3 if !one_pu => Err(Error::config(
                "algorithm",
                "needs exactly one PU",
            )),
            Algorithm::NeClosedForm if !(one_pu && self.network.sus().len() == 2) => Err(Error::config(
                "algorithm",
                "the closed form needs one PU and two SUs",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Converged,
    Oscillating,
    MaxIterations,
    /// ISR floors over budget, or no ISR-feasible leader strategy.
    Infeasible,
    Failed,
}

impl Outcome {
    pub fn is_failure(self) -> bool {
        matches!(self, Outcome::Infeasible | Outcome::Failed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Converged => "converged",
            Outcome::Oscillating => "oscillating",
            Outcome::MaxIterations => "max-iterations",
            Outcome::Infeasible => "infeasible",
            Outcome::Failed => "failed",
        }
    }
}

impl From<TraceStatus> for Outcome {
    fn from(s: TraceStatus) -> Self {
        match s {
            TraceStatus::Converged => Outcome::Converged,
            TraceStatus::Oscillating => Outcome::Oscillating,
            TraceStatus::MaxIterations => Outcome::MaxIterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationSummary {
    pub index: usize,
    pub outcome: Outcome,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    /// Final utilities per user (empty on failure).
    pub utilities: Vec<f64>,
    /// Largest PU ISR at the final profile.
    pub worst_isr: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub realizations: usize,
    pub outcome_counts: BTreeMap<String, usize>,
    pub nonconverged_fraction: f64,
    /// Per user, per sub-channel; converged realizations only.
    pub mean_powers: Vec<Vec<f64>>,
    /// Per user; converged realizations only.
    pub mean_utilities: Vec<f64>,
    pub max_converged_isr: Option<f64>,
    pub first_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub realizations: Vec<RealizationSummary>,
    /// Mean per-iteration curve over all non-failed realizations, each padded
    /// with its last value. Columns: iter, mean_u{user}..., mean_p{user}_{f}...,
    /// n_converged (realizations converged by that iteration).
    pub curve: Option<Table>,
}

struct Run {
    summary: RealizationSummary,
    profile: Option<PowerProfile>,
    /// Per-iterate (utilities, flattened powers).
    trace: Option<Vec<Vec<f64>>>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn flatten_iterate(u: &[f64], p: &PowerProfile) -> Vec<f64> {
    let mut v = u.to_vec();
    v.extend_from_slice(p.as_slice());
    v
}

fn from_trace(index: usize, trace: SolveTrace) -> Run {
    let rows = trace
        .iterates
        .iter()
        .zip(&trace.utilities)
        .map(|(p, u)| flatten_iterate(u, p))
        .collect();
    Run {
        summary: RealizationSummary {
            index,
            outcome: trace.status.into(),
            iterations: trace.len(),
            converged_at: trace.converged_at,
            utilities: trace.final_utilities().to_vec(),
            worst_isr: Some(trace.final_worst_isr()),
            error: None,
        },
        profile: Some(trace.final_profile().clone()),
        trace: Some(rows),
    }
}

fn point(index: usize, profile: PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> Run {
    Run {
        summary: RealizationSummary {
            index,
            outcome: Outcome::Converged,
            iterations: 0,
            converged_at: None,
            utilities: utilities_unchecked(&profile, gains, config),
            worst_isr: Some(worst_isr(&profile, gains, config)),
            error: None,
        },
        profile: Some(profile),
        trace: None,
    }
}

fn fixed_pu(spec: &ExperimentSpec) -> PowerProfile {
    let mut p = PowerProfile::for_config(&spec.network);
    if let Some(rows) = &spec.pu_powers {
        for (row, &k) in rows.iter().zip(spec.network.pus()) {
            p.set_row(k, row);
        }
    }
    p
}

/// Solve one realization with gains already drawn.
fn solve_one(spec: &ExperimentSpec, index: usize, gains: &GainTensor) -> Result<Run> {
    let config = &spec.network;
    match spec.algorithm {
        Algorithm::NeClosedForm => {
            let (profile, _) = solve_symmetric(&fixed_pu(spec), gains, config, DEFAULT_SYMMETRY_TOL)?;
            Ok(point(index, profile, gains, config))
        }
        Algorithm::NeIterative => {
            let mut profile = fixed_pu(spec);
            let mut rows = vec![flatten_iterate(&utilities_unchecked(&profile, gains, config), &profile)];
            let mut converged_at = None;
            for k in 0..spec.ne.max_iter {
                let delta = sweep(&mut profile, gains, config, spec.ne.order)?;
                rows.push(flatten_iterate(&utilities_unchecked(&profile, gains, config), &profile));
                if delta <= spec.ne.tol {
                    converged_at = Some(k + 1);
                    break;
                }
            }
            let mut run = point(index, profile, gains, config);
            run.summary.iterations = rows.len();
            run.summary.converged_at = converged_at;
            if converged_at.is_none() {
                run.summary.outcome = Outcome::MaxIterations;
            }
            run.trace = Some(rows);
            Ok(run)
        }
        Algorithm::Se => {
            let search = SearchSpec {
                seed: splitmix(spec.search.seed ^ splitmix(spec.seed ^ splitmix(index as u64))),
                ..spec.search.clone()
            };
            let se = solve_leader(gains, config, &search)?;
            Ok(point(index, se.su_profile, gains, config))
        }
        Algorithm::Alg2 => Ok(from_trace(index, run_alg2(gains, config, &spec.schedule)?)),
        Algorithm::Alg3 => Ok(from_trace(index, run_alg3(gains, config, &spec.schedule)?)),
        Algorithm::Alg4 => Ok(from_trace(index, run_alg4(gains, config, &spec.schedule)?)),
    }
}

fn realize(spec: &ExperimentSpec, index: usize) -> Run {
    let result = draw_gains(&spec.channel, &spec.network, spec.seed, index as u64)
        .and_then(|g| solve_one(spec, index, &g));
    result.unwrap_or_else(|e| Run {
        summary: RealizationSummary {
            index,
            outcome: match e {
                Error::InfeasibleIsr { .. } | Error::InfeasibleLeader { .. } => Outcome::Infeasible,
                _ => Outcome::Failed,
            },
            iterations: 0,
            converged_at: None,
            utilities: Vec::new(),
            worst_isr: None,
            error: Some(e.to_string()),
        },
        profile: None,
        trace: None,
    })
}

/// Ordered accumulation of padded per-iteration curves.
#[derive(Default)]
struct CurveAcc {
    width: usize,
    /// Sum over realizations still running at iteration `t`.
    running: Vec<Vec<f64>>,
    /// Final rows of realizations whose trace had length `len`, summed.
    finals: BTreeMap<usize, Vec<f64>>,
    converged_at: BTreeMap<usize, usize>,
    count: usize,
}

impl CurveAcc {
    fn add(&mut self, rows: &[Vec<f64>], converged_at: Option<usize>) {
        let Some(last) = rows.last() else { return };
        self.width = last.len();
        if self.running.len() < rows.len() {
            self.running.resize(rows.len(), vec![0.0; self.width]);
        }
        for (acc, row) in self.running.iter_mut().zip(rows) {
            for (a, v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        let fin = self.finals.entry(rows.len()).or_insert_with(|| vec![0.0; self.width]);
        for (a, v) in fin.iter_mut().zip(last) {
            *a += v;
        }
        if let Some(t) = converged_at {
            *self.converged_at.entry(t).or_default() += 1;
        }
        self.count += 1;
    }

    fn table(&self, config: &NetworkConfig) -> Option<Table> {
        if self.count == 0 {
            return None;
        }
        let l = config.n_users();
        let n = config.n_subchannels();
        let mut header = vec!["iter".to_string()];
        header.extend((0..l).map(|u| format!("mean_u{u}")));
        for u in 0..l {
            header.extend((0..n).map(|f| format!("mean_p{u}_{f}")));
        }
        header.push("n_converged".into());
        let mut table = Table::new(header);
        let mut padded = vec![0.0; self.width];
        let mut converged = 0;
        for (t, running) in self.running.iter().enumerate() {
            // Traces of length <= t contribute their final value from here on.
            if let Some(fin) = self.finals.get(&t) {
                for (p, v) in padded.iter_mut().zip(fin) {
                    *p += v;
                }
            }
            converged += self.converged_at.get(&t).copied().unwrap_or(0);
            let mut row = vec![t.to_string()];
            row.extend(
                running
                    .iter()
                    .zip(&padded)
                    .map(|(a, b)| fmt_f64((a + b) / self.count as f64)),
            );
            row.push(converged.to_string());
            table.push(row);
        }
        Some(table)
    }
}

/// Run with the global rayon pool.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    run_experiment_with_threads(spec, None)
}

/// Run with at most `threads` workers (all available when `None`). Fails when
/// more than half of the realizations are infeasible or errored.
pub fn run_experiment_with_threads(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutput> {
    let out = run_realizations(spec, threads)?;
    let count = |o: Outcome| out.report.outcome_counts.get(o.as_str()).copied().unwrap_or(0);
    let infeasible = count(Outcome::Infeasible);
    let failed = infeasible + count(Outcome::Failed);
    if 2 * failed > spec.realizations {
        return Err(Error::ExperimentFailed {
            failed,
            infeasible,
            total: spec.realizations,
            first: out.report.first_error.unwrap_or_default(),
        });
    }
    Ok(out)
}

/// Like [`run_experiment_with_threads`] without the failure-rate check, for
/// callers that want the outcome breakdown of a mostly infeasible setup.
pub fn run_realizations(spec: &ExperimentSpec, threads: Option<usize>) -> Result<ExperimentOutput> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
    let config = &spec.network;
    let l = config.n_users();
    let n = config.n_subchannels();

    let mut curve = CurveAcc::default();
    let mut power_sum = vec![0.0; l * n];
    let mut util_sum = vec![0.0; l];
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n_converged = 0usize;
    let mut max_isr: Option<f64> = None;
    let mut first_error = None;
    let mut summaries = Vec::with_capacity(spec.realizations);

    // Chunks bound memory held by in-flight traces.
    const CHUNK: usize = 256;
    let mut start = 0;
    while start < spec.realizations {
        let end = (start + CHUNK).min(spec.realizations);
        let runs: Vec<Run> = pool.install(|| (start..end).into_par_iter().map(|r| realize(spec, r)).collect());
        for run in runs {
            let s = &run.summary;
            *counts.entry(s.outcome.as_str().to_owned()).or_default() += 1;
            if s.outcome.is_failure() {
                if first_error.is_none() {
                    first_error = s.error.clone();
                }
            } else if let Some(rows) = &run.trace {
                curve.add(rows, s.converged_at);
            }
            if s.outcome == Outcome::Converged {
                n_converged += 1;
                if let Some(p) = &run.profile {
                    for (a, v) in power_sum.iter_mut().zip(p.as_slice()) {
                        *a += v;
                    }
                }
                for (a, v) in util_sum.iter_mut().zip(&s.utilities) {
                    *a += v;
                }
                if let Some(x) = s.worst_isr {
                    max_isr = Some(max_isr.map_or(x, |m: f64| m.max(x)));
                }
            }
            summaries.push(run.summary);
        }
        start = end;
    }

    let denom = n_converged.max(1) as f64;
    let mean_powers = (0..l)
        .map(|u| (0..n).map(|f| power_sum[u * n + f] / denom).collect())
        .collect();
    let report = ExperimentReport {
        schema: 1,
        algorithm: spec.algorithm,
        seed: spec.seed,
        realizations: spec.realizations,
        outcome_counts: counts,
        nonconverged_fraction: 1.0 - n_converged as f64 / spec.realizations as f64,
        mean_powers,
        mean_utilities: util_sum.iter().map(|s| s / denom).collect(),
        max_converged_isr: max_isr,
        first_error,
    };
    Ok(ExperimentOutput {
        report,
        realizations: summaries,
        curve: curve.table(config),
    })
}
