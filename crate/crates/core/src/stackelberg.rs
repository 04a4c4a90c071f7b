//! The leader's problem: choose PU powers anticipating the followers'
//! equilibrium, subject to the budget and the ISR cap at that equilibrium.
//!
//! The objective is non-convex and only piecewise smooth (the follower
//! equilibrium switches active sets), so the search is derivative-free: a
//! multi-start pattern search over the budget simplex, with an exhaustive grid
//! mode used as an oracle on small instances.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::closedform::{solve_symmetric, DEFAULT_SYMMETRY_TOL};
use crate::error::{Error, Result};
use crate::model::{
    interference, isr_ratio, utilities_unchecked, GainTensor, NetworkConfig, PowerProfile,
    BUDGET_EPS, ISR_EPS,
};
use crate::subgame::{solve_ne, verify_ne, NeOptions};
use crate::waterfill::waterfill;

/// How the follower equilibrium is computed for a candidate leader strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NeSolver {
    /// Closed form on symmetric channels, best-response iteration otherwise.
    #[default]
    Auto,
    ClosedForm,
    Iterative,
}

const ITERATIVE_NE: NeOptions = NeOptions {
    tol: 1e-8,
    max_iter: 500,
    order: crate::subgame::UpdateOrder::Jacobi,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Anticipated {
    Feasible { utility: f64, profile: PowerProfile },
    /// The followers' equilibrium breaks the ISR cap somewhere.
    IsrInfeasible { worst_isr: f64, profile: PowerProfile },
    /// Best-response iteration did not settle; the point is not scored.
    Unresolved,
}

impl Anticipated {
    pub fn utility(&self) -> Option<f64> {
        match self {
            Anticipated::Feasible { utility, .. } => Some(*utility),
            _ => None,
        }
    }

    /// Lexicographic score: any feasible point beats any infeasible one;
    /// infeasible points rank by how badly they miss the cap.
    fn score(&self) -> (u8, f64) {
        match self {
            Anticipated::Feasible { utility, .. } => (2, *utility),
            Anticipated::IsrInfeasible { worst_isr, .. } => (1, -worst_isr),
            Anticipated::Unresolved => (0, 0.0),
        }
    }
}

fn better(a: (u8, f64), b: (u8, f64)) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 > b.1)
}

fn check_leader(p1: &[f64], config: &NetworkConfig, pu: usize) -> Result<()> {
    let n = config.n_subchannels();
    if p1.len() != n {
        return Err(Error::Usage(format!("expected {n} PU powers, got {}", p1.len())));
    }
    if let Some(x) = p1.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::Usage(format!("PU power must be finite and nonnegative, got {x}")));
    }
    let total: f64 = p1.iter().sum();
    if total > config.budget(pu) + BUDGET_EPS {
        return Err(Error::Usage(format!(
            "PU powers total {total}, over the budget {}",
            config.budget(pu)
        )));
    }
    Ok(())
}

fn leader(config: &NetworkConfig) -> Result<usize> {
    match config.pus() {
        [k] => Ok(*k),
        pus => Err(Error::Usage(format!(
            "the leader problem needs exactly one PU, got {}",
            pus.len()
        ))),
    }
}

fn follower_equilibrium(
    start: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    solver: NeSolver,
) -> Result<Option<PowerProfile>> {
    let closed = || solve_symmetric(start, gains, config, DEFAULT_SYMMETRY_TOL).map(|(p, _)| p);
    let iterate = || -> Result<Option<PowerProfile>> {
        let r = solve_ne(start, gains, config, &ITERATIVE_NE)?;
        Ok(r.converged.then_some(r.profile))
    };
    match solver {
        NeSolver::ClosedForm => closed().map(Some),
        NeSolver::Iterative => iterate(),
        NeSolver::Auto => match closed() {
            Ok(p) => Ok(Some(p)),
            Err(Error::SymmetryMismatch { .. } | Error::UnsupportedCardinality { .. } | Error::Domain(_)) => {
                iterate()
            }
            Err(e) => Err(e),
        },
    }
}

fn evaluate(p1: &[f64], gains: &GainTensor, config: &NetworkConfig, solver: NeSolver, pu: usize) -> Result<Anticipated> {
    let mut start = PowerProfile::for_config(config);
    start.set_row(pu, p1);
    let Some(profile) = follower_equilibrium(&start, gains, config, solver)? else {
        return Ok(Anticipated::Unresolved);
    };
    let worst_isr = (0..config.n_subchannels())
        .map(|f| isr_ratio(interference(&profile, gains, pu, f), p1[f] * gains.get(pu, pu, f)))
        .fold(0.0, f64::max);
    if worst_isr > config.isr_threshold() + ISR_EPS {
        return Ok(Anticipated::IsrInfeasible { worst_isr, profile });
    }
    let utility = utilities_unchecked(&profile, gains, config)[pu];
    Ok(Anticipated::Feasible { utility, profile })
}

/// Leader utility at `p1` once the followers settle, or why it does not count.
pub fn anticipated_utility(
    p1: &[f64],
    gains: &GainTensor,
    config: &NetworkConfig,
    solver: NeSolver,
) -> Result<Anticipated> {
    gains.check_matches(config)?;
    let pu = leader(config)?;
    check_leader(p1, config, pu)?;
    evaluate(p1, gains, config, solver, pu)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpec {
    /// Random starts in addition to the PU's own water-fill.
    pub restarts: usize,
    pub seed: u64,
    /// Initial pattern step as a fraction of the PU budget.
    pub initial_step: f64,
    pub shrink: f64,
    /// Absolute step at which a start stops.
    pub min_step: f64,
    /// Evaluate the simplex grid with this many divisions per unit budget
    /// instead of searching.
    pub grid: Option<usize>,
    pub solver: NeSolver,
}

impl Default for SearchSpec {
    fn default() -> Self {
        SearchSpec {
            restarts: 16,
            seed: 0,
            initial_step: 0.25,
            shrink: 0.5,
            min_step: 1e-6,
            grid: None,
            solver: NeSolver::Auto,
        }
    }
}

impl SearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(Error::config("search.initial_step", "must lie in (0, 1]"));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::config("search.shrink", "must lie in (0, 1)"));
        }
        if !(self.min_step > 0.0 && self.min_step.is_finite()) {
            return Err(Error::config("search.min_step", "must be positive"));
        }
        if self.grid == Some(0) {
            return Err(Error::config("search.grid", "needs at least one division"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SearchStats {
    pub evaluations: usize,
    /// Best feasible utility after each start (`None` until one is found).
    pub best_history: Vec<Option<f64>>,
    pub restarts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeResult {
    pub pu_power: Vec<f64>,
    /// Full profile: PU row `pu_power`, SU rows at the follower equilibrium.
    pub su_profile: PowerProfile,
    pub leader_utility: f64,
    /// In `config.sus()` order.
    pub follower_utilities: Vec<f64>,
    pub search_stats: SearchStats,
}

/// Memoized evaluations on a 1e-10 grid of PU powers.
struct Evaluator<'a> {
    gains: &'a GainTensor,
    config: &'a NetworkConfig,
    solver: NeSolver,
    pu: usize,
    cache: HashMap<Vec<i64>, (u8, f64)>,
    evaluations: usize,
}

impl<'a> Evaluator<'a> {
    fn score(&mut self, p1: &[f64]) -> Result<(u8, f64)> {
        let key: Vec<i64> = p1.iter().map(|x| (x * 1e10).round() as i64).collect();
        if let Some(s) = self.cache.get(&key) {
            return Ok(*s);
        }
        self.evaluations += 1;
        let s = evaluate(p1, self.gains, self.config, self.solver, self.pu)?.score();
        self.cache.insert(key, s);
        Ok(s)
    }
}

/// Pattern search on `x` (PU powers plus a slack coordinate, summing to the
/// budget). Moves shift `step` of mass between two coordinates.
fn pattern_search(ev: &mut Evaluator, mut x: Vec<f64>, budget: f64, spec: &SearchSpec) -> Result<(Vec<f64>, (u8, f64))> {
    let m = x.len();
    let n = m - 1;
    let mut best = ev.score(&x[..n])?;
    let mut step = spec.initial_step * budget;
    while step >= spec.min_step {
        let mut improved = false;
        for a in 0..m {
            for b in 0..m {
                if a == b || x[b] <= 0.0 {
                    continue;
                }
                let t = step.min(x[b]);
                let mut y = x.clone();
                y[b] -= t;
                y[a] += t;
                // Keep the PU part inside the budget despite roundoff.
                let s: f64 = y[..n].iter().sum();
                if s > budget {
                    let scale = budget / s;
                    y[..n].iter_mut().for_each(|v| *v *= scale);
                }
                let sc = ev.score(&y[..n])?;
                if better(sc, best) {
                    best = sc;
                    x = y;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= spec.shrink;
        }
    }
    Ok((x, best))
}

fn finish(
    p1: Vec<f64>,
    gains: &GainTensor,
    config: &NetworkConfig,
    solver: NeSolver,
    pu: usize,
    stats: SearchStats,
) -> Result<SeResult> {
    match evaluate(&p1, gains, config, solver, pu)? {
        Anticipated::Feasible { utility, profile } => {
            let u = utilities_unchecked(&profile, gains, config);
            debug_assert!(verify_ne(&profile, gains, config, 1e-6)?.is_ne);
            Ok(SeResult {
                pu_power: p1,
                su_profile: profile,
                leader_utility: utility,
                follower_utilities: config.sus().iter().map(|&i| u[i]).collect(),
                search_stats: stats,
            })
        }
        _ => Err(Error::InfeasibleLeader {
            evaluations: stats.evaluations,
        }),
    }
}

/// Flat Dirichlet draw: normalized unit exponentials.
fn uniform_simplex(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|x| x / total).collect()
}

/// Multi-start pattern search for the leader's best anticipating strategy.
pub fn solve_leader(gains: &GainTensor, config: &NetworkConfig, spec: &SearchSpec) -> Result<SeResult> {
    gains.check_matches(config)?;
    spec.validate()?;
    let pu = leader(config)?;
    if let Some(d) = spec.grid {
        return grid_search(gains, config, d, spec.solver);
    }
    let n = config.n_subchannels();
    let budget = config.budget(pu);
    let mut stats = SearchStats::default();
    let mut best: Option<(Vec<f64>, f64)> = None;

    let own_sigma: Vec<f64> = (0..n)
        .map(|f| {
            let g = gains.get(pu, pu, f);
            if g > 0.0 {
                config.noise(pu, f) / g
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let mut starts = Vec::with_capacity(spec.restarts + 1);
    let mut wf = waterfill(&own_sigma, budget)?.powers;
    wf.push((budget - wf.iter().sum::<f64>()).max(0.0));
    starts.push(wf);
    if budget > 0.0 {
        for r in 0..spec.restarts {
            let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
            rng.set_stream(r as u64 + 1);
            starts.push(uniform_simplex(&mut rng, n + 1).iter().map(|v| v * budget).collect());
        }
    }

    for x0 in starts {
        let mut ev = Evaluator {
            gains,
            config,
            solver: spec.solver,
            pu,
            cache: HashMap::new(),
            evaluations: 0,
        };
        let (x, score) = pattern_search(&mut ev, x0, budget, spec)?;
        stats.evaluations += ev.evaluations;
        stats.restarts += 1;
        if score.0 == 2 && best.as_ref().is_none_or(|(_, u)| score.1 > *u) {
            best = Some((x[..n].to_vec(), score.1));
        }
        stats.best_history.push(best.as_ref().map(|(_, u)| *u));
    }
    match best {
        Some((p1, _)) => finish(p1, gains, config, spec.solver, pu, stats),
        None => Err(Error::InfeasibleLeader {
            evaluations: stats.evaluations,
        }),
    }
}

/// Visit every `k / divisions` point of the budget simplex (sum at most the
/// budget) and keep the best feasible one.
pub fn grid_search(gains: &GainTensor, config: &NetworkConfig, divisions: usize, solver: NeSolver) -> Result<SeResult> {
    gains.check_matches(config)?;
    let pu = leader(config)?;
    if divisions == 0 {
        return Err(Error::Usage("grid needs at least one division".into()));
    }
    let n = config.n_subchannels();
    let budget = config.budget(pu);
    let unit = budget / divisions as f64;
    let mut stats = SearchStats::default();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut k = vec![0usize; n];
    loop {
        let p1: Vec<f64> = k.iter().map(|&c| c as f64 * unit).collect();
        stats.evaluations += 1;
        if let Anticipated::Feasible { utility, .. } = evaluate(&p1, gains, config, solver, pu)? {
            if best.as_ref().is_none_or(|(_, u)| utility > *u) {
                best = Some((p1, utility));
            }
        }
        // Next composition with sum <= divisions, odometer order.
        let mut pos = 0;
        loop {
            if pos == n {
                stats.restarts = 1;
                stats.best_history.push(best.as_ref().map(|(_, u)| *u));
                return match best {
                    Some((p1, _)) => finish(p1, gains, config, solver, pu, stats),
                    None => Err(Error::InfeasibleLeader {
                        evaluations: stats.evaluations,
                    }),
                };
            }
            k[pos] += 1;
            if k.iter().sum::<usize>() <= divisions {
                break;
            }
            k[pos] = 0;
            pos += 1;
        }
    }
}
