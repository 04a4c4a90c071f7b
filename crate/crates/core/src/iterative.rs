//! Distributed leader/follower iterations for a leader that cannot anticipate
//! the followers: synchronous (one PU), asynchronous (one PU), and multi-PU.
//!
//! Every scheme records a [`SolveTrace`] and stops when [`classify`] sees a
//! converged window or a clean cycle, or at `max_outer`.

use serde::{Deserialize, Serialize};

use crate::closedform::{detect_symmetric, solve_symmetric, DEFAULT_SYMMETRY_TOL};
use crate::error::{Error, Result};
use crate::model::{
    interference, isr_ratio, utilities_unchecked, GainTensor, NetworkConfig, PowerProfile,
    BUDGET_EPS, ISR_EPS,
};
use crate::report::{fmt_f64, Table};
use crate::subgame::{sweep, UpdateOrder};
use crate::waterfill::waterfill_with_floors;

/// Ticks at which the asynchronous PU update fires.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TauSchedule {
    /// `stride * k` for `k = 1, 2, ...`.
    Stride { stride: usize },
    /// Listed ticks, then continuing with the last gap.
    Explicit { ticks: Vec<usize> },
}

impl Default for TauSchedule {
    fn default() -> Self {
        TauSchedule::Stride { stride: 3 }
    }
}

impl TauSchedule {
    fn validate(&self) -> Result<()> {
        match self {
            TauSchedule::Stride { stride } if *stride == 0 => {
                Err(Error::config("schedule.tau.stride", "must be at least 1"))
            }
            TauSchedule::Explicit { ticks } => {
                if ticks.is_empty() {
                    return Err(Error::config("schedule.tau.ticks", "must not be empty"));
                }
                if ticks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(Error::config("schedule.tau.ticks", "must be strictly increasing"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn contains(&self, n: usize) -> bool {
        match self {
            TauSchedule::Stride { stride } => n >= *stride && n % stride == 0,
            TauSchedule::Explicit { ticks } => {
                let last = *ticks.last().expect("validated non-empty");
                if n <= last {
                    return ticks.binary_search(&n).is_ok();
                }
                let gap = if ticks.len() >= 2 {
                    last - ticks[ticks.len() - 2]
                } else {
                    1
                };
                (n - last) % gap == 0
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationSchedule {
    /// Synchronous PU step size.
    pub eta: f64,
    /// Asynchronous PU step size.
    pub delta: f64,
    /// Per-PU step sizes for the multi-PU scheme; `eta` for all when absent.
    pub eta_per_pu: Option<Vec<f64>>,
    /// Best-response sweeps per outer round when the closed form does not apply.
    pub inner_iters: usize,
    /// Cap on the multi-PU inner loop.
    pub pu_inner_max: usize,
    pub tau: TauSchedule,
    pub max_outer: usize,
    pub tol: f64,
    pub window_len: usize,
    /// Use the closed-form follower equilibrium when the channel is symmetric.
    pub closed_form: bool,
    /// Initial PU rows in `config.pus()` order; uniform split of the budget when absent.
    pub init_pu: Option<Vec<Vec<f64>>>,
    /// Initial SU rows in `config.sus()` order (asynchronous scheme); zeros when absent.
    pub init_su: Option<Vec<Vec<f64>>>,
}

impl Default for IterationSchedule {
    fn default() -> Self {
        IterationSchedule {
            eta: 0.1,
            delta: 0.1,
            eta_per_pu: None,
            inner_iters: 10,
            pu_inner_max: 500,
            tau: TauSchedule::default(),
            max_outer: 2000,
            tol: 1e-9,
            window_len: 50,
            closed_form: true,
            init_pu: None,
            init_su: None,
        }
    }
}

fn check_step(field: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::config(field, format!("step size must lie in (0, 1], got {x}")));
    }
    Ok(())
}

impl IterationSchedule {
    pub fn validate(&self, config: &NetworkConfig) -> Result<()> {
        check_step("schedule.eta", self.eta)?;
        check_step("schedule.delta", self.delta)?;
        if let Some(etas) = &self.eta_per_pu {
            if etas.len() != config.pus().len() {
                return Err(Error::config(
                    "schedule.eta_per_pu",
                    format!("expected {} entries, got {}", config.pus().len(), etas.len()),
                ));
            }
            for (k, &e) in etas.iter().enumerate() {
                check_step(&format!("schedule.eta_per_pu[{k}]"), e)?;
            }
        }
        if self.inner_iters == 0 {
            return Err(Error::config("schedule.inner_iters", "must be at least 1"));
        }
        if self.pu_inner_max == 0 {
            return Err(Error::config("schedule.pu_inner_max", "must be at least 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::config("schedule.max_outer", "must be at least 1"));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("schedule.tol", "must be positive"));
        }
        if self.window_len < 2 {
            return Err(Error::config("schedule.window_len", "must be at least 2"));
        }
        self.tau.validate()?;
        let n = config.n_subchannels();
        for (name, rows, users) in [
            ("schedule.init_pu", &self.init_pu, config.pus()),
            ("schedule.init_su", &self.init_su, config.sus()),
        ] {
            let Some(rows) = rows else { continue };
            if rows.len() != users.len() {
                return Err(Error::config(
                    name,
                    format!("expected {} rows, got {}", users.len(), rows.len()),
                ));
            }
            for (r, (row, &u)) in rows.iter().zip(users).enumerate() {
                let field = format!("{name}[{r}]");
                if row.len() != n {
                    return Err(Error::config(field, format!("expected {n} entries, got {}", row.len())));
                }
                if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(Error::config(field, "powers must be finite and nonnegative"));
                }
                let total: f64 = row.iter().sum();
                if total > config.budget(u) + BUDGET_EPS {
                    return Err(Error::config(
                        field,
                        format!("total {total} exceeds budget {}", config.budget(u)),
                    ));
                }
            }
        }
        Ok(())
    }

    fn eta_for(&self, pos: usize) -> f64 {
        self.eta_per_pu.as_ref().map_or(self.eta, |e| e[pos])
    }

    fn initial_profile(&self, config: &NetworkConfig) -> PowerProfile {
        let n = config.n_subchannels();
        let mut p = PowerProfile::for_config(config);
        for (pos, &k) in config.pus().iter().enumerate() {
            match &self.init_pu {
                Some(rows) => p.set_row(k, &rows[pos]),
                None => p.set_row(k, &vec![config.budget(k) / n as f64; n]),
            }
        }
        if let Some(rows) = &self.init_su {
            for (row, &i) in rows.iter().zip(config.sus()) {
                p.set_row(i, row);
            }
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStatus {
    Converged,
    Oscillating,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterates: Vec<PowerProfile>,
    /// Per iterate, per user.
    pub utilities: Vec<Vec<f64>>,
    /// Per iterate, per PU (in `config.pus()` order), per sub-channel.
    pub isr: Vec<Vec<Vec<f64>>>,
    pub status: TraceStatus,
    /// First iterate of the final stretch of sub-`tol` changes, when converged.
    pub converged_at: Option<usize>,
}

impl SolveTrace {
    fn new() -> Self {
        SolveTrace {
            iterates: Vec::new(),
            utilities: Vec::new(),
            isr: Vec::new(),
            status: TraceStatus::MaxIterations,
            converged_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.iterates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterates.is_empty()
    }

    pub fn final_profile(&self) -> &PowerProfile {
        self.iterates.last().expect("trace holds at least one iterate")
    }

    pub fn final_utilities(&self) -> &[f64] {
        self.utilities.last().expect("trace holds at least one iterate")
    }

    /// Largest ISR over all PUs and sub-channels at the final iterate.
    pub fn final_worst_isr(&self) -> f64 {
        self.isr
            .last()
            .map(|per_pu| per_pu.iter().flatten().copied().fold(0.0, f64::max))
            .unwrap_or(0.0)
    }

    /// Sum of PU utilities per iterate.
    pub fn leader_utility(&self, config: &NetworkConfig) -> Vec<f64> {
        self.utilities
            .iter()
            .map(|u| config.pus().iter().map(|&k| u[k]).sum())
            .collect()
    }

    fn record(&mut self, profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig) {
        self.utilities.push(utilities_unchecked(profile, gains, config));
        self.isr.push(
            config
                .pus()
                .iter()
                .map(|&k| {
                    (0..config.n_subchannels())
                        .map(|f| {
                            isr_ratio(
                                interference(profile, gains, k, f),
                                profile.get(k, f) * gains.get(k, k, f),
                            )
                        })
                        .collect()
                })
                .collect(),
        );
        self.iterates.push(profile.clone());
    }

    /// Early stop on a converged window or a clean cycle.
    fn should_stop(&mut self, tol: f64, window_len: usize) -> bool {
        if self.iterates.len() <= window_len {
            return false;
        }
        let start = self.iterates.len() - window_len - 1;
        let window = &self.iterates[start..];
        if max_change(window) <= tol {
            self.finish(TraceStatus::Converged, tol);
            return true;
        }
        if detect_cycle(window, tol) {
            self.finish(TraceStatus::Oscillating, tol);
            return true;
        }
        false
    }

    fn finish(&mut self, status: TraceStatus, tol: f64) {
        self.status = status;
        if status == TraceStatus::Converged {
            let mut at = self.iterates.len() - 1;
            while at > 0 && self.iterates[at].max_abs_diff(&self.iterates[at - 1]) <= tol {
                at -= 1;
            }
            self.converged_at = Some(at);
        }
    }

    fn close(&mut self, config: &NetworkConfig, tol: f64, window_len: usize) {
        let u1 = self.leader_utility(config);
        let status = classify(&self.iterates, &u1, tol, window_len);
        self.finish(status, tol);
    }
}

fn max_change(window: &[PowerProfile]) -> f64 {
    window
        .windows(2)
        .map(|w| w[1].max_abs_diff(&w[0]))
        .fold(0.0, f64::max)
}

/// Periodic with some period `>= 2` across the whole window while moving by
/// more than `100 * tol` per step somewhere.
fn detect_cycle(window: &[PowerProfile], tol: f64) -> bool {
    if max_change(window) <= 100.0 * tol {
        return false;
    }
    let len = window.len();
    (2..=len / 2).any(|lag| (lag..len).all(|n| window[n].max_abs_diff(&window[n - lag]) <= tol))
}

/// Label the tail of a trace.
///
/// `leader_utility` runs parallel to `iterates`. Only the last `window_len`
/// changes are inspected.
pub fn classify(
    iterates: &[PowerProfile],
    leader_utility: &[f64],
    tol: f64,
    window_len: usize,
) -> TraceStatus {
    let window_len = window_len.max(2);
    if iterates.len() < 2 {
        return TraceStatus::MaxIterations;
    }
    let start = iterates.len().saturating_sub(window_len + 1);
    let window = &iterates[start..];
    if max_change(window) <= tol {
        return TraceStatus::Converged;
    }
    if detect_cycle(window, tol) {
        return TraceStatus::Oscillating;
    }
    let u_start = leader_utility.len().saturating_sub(window_len + 1);
    let u = &leader_utility[u_start..];
    let half = u.len() / 2;
    if half >= 1 {
        let (lo, hi) = u
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let tail = &u[u.len() - 2 * half..];
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let drift = (mean(&tail[half..]) - mean(&tail[..half])).abs();
        if hi - lo > 100.0 * tol && drift < tol {
            return TraceStatus::Oscillating;
        }
    }
    TraceStatus::MaxIterations
}

/// One damped PU step: move `p_now` by `eta` toward the ISR-floored water-fill
/// against the measured `interference`.
pub fn pu_update(
    pu: usize,
    p_now: &[f64],
    interference: &[f64],
    gains: &GainTensor,
    config: &NetworkConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    gains.check_matches(config)?;
    config.check_pu(pu)?;
    let n = config.n_subchannels();
    if p_now.len() != n || interference.len() != n {
        return Err(Error::Usage(format!(
            "expected {n} sub-channels, got {} powers and {} interference values",
            p_now.len(),
            interference.len()
        )));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::Domain(format!("step size must lie in (0, 1], got {eta}")));
    }
    if let Some(x) = interference.iter().find(|x| !(**x >= 0.0)) {
        return Err(Error::Domain(format!("interference must be nonnegative, got {x}")));
    }
    pu_update_unchecked(pu, p_now, interference, gains, config, eta)
}

fn pu_update_unchecked(
    pu: usize,
    p_now: &[f64],
    interference: &[f64],
    gains: &GainTensor,
    config: &NetworkConfig,
    eta: f64,
) -> Result<Vec<f64>> {
    let rho = config.isr_threshold();
    let n = config.n_subchannels();
    let mut sigma = Vec::with_capacity(n);
    let mut floors = Vec::with_capacity(n);
    for f in 0..n {
        let g = gains.get(pu, pu, f);
        let i = interference[f];
        if g > 0.0 {
            sigma.push((i + config.noise(pu, f)) / g);
            floors.push(i / (rho * g));
        } else {
            sigma.push(f64::INFINITY);
            floors.push(if i > 0.0 { f64::INFINITY } else { 0.0 });
        }
    }
    let target = waterfill_with_floors(&sigma, config.budget(pu), &floors)
        .map_err(|e| e.with_isr_context(Some(pu), None))?
        .powers;
    Ok(p_now
        .iter()
        .zip(target)
        .map(|(p, t)| (1.0 - eta) * p + eta * t)
        .collect())
}

fn measured(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig, pu: usize) -> Vec<f64> {
    (0..config.n_subchannels())
        .map(|f| interference(profile, gains, pu, f))
        .collect()
}

/// How followers react to the current PU powers.
enum Followers {
    ClosedForm,
    Sweeps { max: usize, tol: f64 },
}

impl Followers {
    fn choose(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig, schedule: &IterationSchedule) -> Self {
        if schedule.closed_form && detect_symmetric(profile, gains, config, DEFAULT_SYMMETRY_TOL).is_ok() {
            Followers::ClosedForm
        } else {
            Followers::Sweeps {
                max: schedule.inner_iters,
                tol: 0.01 * schedule.tol,
            }
        }
    }

    fn respond(&self, profile: &mut PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> Result<()> {
        match *self {
            Followers::ClosedForm => {
                let (next, _) = solve_symmetric(profile, gains, config, DEFAULT_SYMMETRY_TOL)?;
                *profile = next;
            }
            Followers::Sweeps { max, tol } => {
                for _ in 0..max {
                    if sweep(profile, gains, config, UpdateOrder::Jacobi)? <= tol {
                        break;
                    }
                }
            }
        }
        Ok(())
    }
}

fn single_pu(config: &NetworkConfig, what: &str) -> Result<usize> {
    match config.pus() {
        [k] => Ok(*k),
        pus => Err(Error::Usage(format!("{what} needs exactly one PU, got {}", pus.len()))),
    }
}

fn prepare(gains: &GainTensor, config: &NetworkConfig, schedule: &IterationSchedule) -> Result<()> {
    gains.check_matches(config)?;
    schedule.validate(config)
}

/// Synchronous scheme: followers settle against `p1(n)`, then the PU steps
/// toward its floored water-fill against the interference they produce.
pub fn run_alg2(gains: &GainTensor, config: &NetworkConfig, schedule: &IterationSchedule) -> Result<SolveTrace> {
    prepare(gains, config, schedule)?;
    let pu = single_pu(config, "the synchronous scheme")?;
    let mut profile = schedule.initial_profile(config);
    let followers = Followers::choose(&profile, gains, config, schedule);
    let mut trace = SolveTrace::new();
    for n in 0..schedule.max_outer {
        followers.respond(&mut profile, gains, config)?;
        trace.record(&profile, gains, config);
        if trace.should_stop(schedule.tol, schedule.window_len) {
            return Ok(trace);
        }
        if n + 1 == schedule.max_outer {
            break;
        }
        let i = measured(&profile, gains, config, pu);
        let next = pu_update_unchecked(pu, profile.row(pu), &i, gains, config, schedule.eta)
            .map_err(|e| e.with_isr_context(Some(pu), Some(n)))?;
        profile.set_row(pu, &next);
    }
    trace.close(config, schedule.tol, schedule.window_len);
    Ok(trace)
}

/// Asynchronous scheme: one follower step per tick; the PU updates only on
/// `schedule.tau` ticks, using the followers' same-tick powers.
pub fn run_alg3(gains: &GainTensor, config: &NetworkConfig, schedule: &IterationSchedule) -> Result<SolveTrace> {
    prepare(gains, config, schedule)?;
    let pu = single_pu(config, "the asynchronous scheme")?;
    let mut profile = schedule.initial_profile(config);
    let rho = config.isr_threshold();
    for f in 0..config.n_subchannels() {
        let isr = isr_ratio(
            interference(&profile, gains, pu, f),
            profile.get(pu, f) * gains.get(pu, pu, f),
        );
        if isr > rho + ISR_EPS {
            return Err(Error::Usage(format!(
                "initial profile violates the ISR cap on sub-channel {f} ({isr} > {rho})"
            )));
        }
    }
    let followers = match Followers::choose(&profile, gains, config, schedule) {
        Followers::Sweeps { .. } => Followers::Sweeps { max: 1, tol: 0.0 },
        cf => cf,
    };
    let mut trace = SolveTrace::new();
    trace.record(&profile, gains, config);
    for n in 0..schedule.max_outer {
        let p1 = profile.row(pu).to_vec();
        followers.respond(&mut profile, gains, config)?;
        if schedule.tau.contains(n) {
            let i = measured(&profile, gains, config, pu);
            let next = pu_update_unchecked(pu, &p1, &i, gains, config, schedule.delta)
                .map_err(|e| e.with_isr_context(Some(pu), Some(n)))?;
            profile.set_row(pu, &next);
        }
        trace.record(&profile, gains, config);
        if trace.should_stop(schedule.tol, schedule.window_len) {
            return Ok(trace);
        }
    }
    trace.close(config, schedule.tol, schedule.window_len);
    Ok(trace)
}

/// Multi-PU scheme: followers settle against all PU powers, then the PUs run
/// simultaneous damped updates among themselves (SU powers frozen) until they
/// settle or hit `pu_inner_max`.
pub fn run_alg4(gains: &GainTensor, config: &NetworkConfig, schedule: &IterationSchedule) -> Result<SolveTrace> {
    prepare(gains, config, schedule)?;
    let mut profile = schedule.initial_profile(config);
    let followers = Followers::choose(&profile, gains, config, schedule);
    let mut trace = SolveTrace::new();
    for n in 0..schedule.max_outer {
        followers.respond(&mut profile, gains, config)?;
        trace.record(&profile, gains, config);
        if trace.should_stop(schedule.tol, schedule.window_len) {
            return Ok(trace);
        }
        if n + 1 == schedule.max_outer {
            break;
        }
        for _ in 0..schedule.pu_inner_max {
            let mut next = Vec::with_capacity(config.pus().len());
            for (pos, &k) in config.pus().iter().enumerate() {
                let i = measured(&profile, gains, config, k);
                let row = pu_update_unchecked(k, profile.row(k), &i, gains, config, schedule.eta_for(pos))
                    .map_err(|e| e.with_isr_context(Some(k), Some(n)))?;
                next.push(row);
            }
            // change / eta estimates the remaining distance to the PU targets.
            let mut distance = 0.0f64;
            for (pos, (row, &k)) in next.iter().zip(config.pus()).enumerate() {
                let eta = schedule.eta_for(pos);
                for (a, b) in row.iter().zip(profile.row(k)) {
                    distance = distance.max((a - b).abs() / eta);
                }
                profile.set_row(k, row);
            }
            if distance <= schedule.tol {
                break;
            }
        }
    }
    trace.close(config, schedule.tol, schedule.window_len);
    Ok(trace)
}

/// Long-format trace: one row per (iterate, user, sub-channel). Every
/// `decimate`-th iterate is kept, plus the last. `isr` is blank for SUs.
pub fn trace_table(trace: &SolveTrace, config: &NetworkConfig, decimate: usize) -> Table {
    let decimate = decimate.max(1);
    let mut table = Table::new(["iter", "user", "subchannel", "power", "utility", "isr"]);
    let last = trace.len().saturating_sub(1);
    for (n, p) in trace.iterates.iter().enumerate() {
        if n % decimate != 0 && n != last {
            continue;
        }
        for u in 0..config.n_users() {
            let pu_pos = config.pus().iter().position(|&k| k == u);
            for f in 0..config.n_subchannels() {
                table.push(vec![
                    n.to_string(),
                    u.to_string(),
                    f.to_string(),
                    fmt_f64(p.get(u, f)),
                    fmt_f64(trace.utilities[n][u]),
                    pu_pos.map(|pos| fmt_f64(trace.isr[n][pos][f])).unwrap_or_default(),
                ]);
            }
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subgame::verify_ne;
    use crate::waterfill::waterfill;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cfg(budgets: Vec<f64>, rho: f64) -> NetworkConfig {
        NetworkConfig::single_pu(3, budgets, 1.0, rho).unwrap()
    }

    fn pu_waterfill(gains: &GainTensor, config: &NetworkConfig) -> Vec<f64> {
        let sigma: Vec<f64> = (0..3).map(|f| config.noise(0, f) / gains.get(0, 0, f)).collect();
        waterfill(&sigma, config.budget(0)).unwrap().powers
    }

    fn random_instance(rng: &mut ChaCha8Rng, cross: f64) -> (GainTensor, NetworkConfig) {
        let mut g = vec![0.0; 27];
        for tx in 0..3 {
            for rx in 0..3 {
                for f in 0..3 {
                    g[(tx * 3 + rx) * 3 + f] = if tx == rx {
                        rng.random_range(0.5..2.0)
                    } else {
                        rng.random_range(0.0..cross)
                    };
                }
            }
        }
        let gains = GainTensor::new(3, 3, g).unwrap();
        let config = cfg(vec![rng.random_range(10.0..20.0), rng.random_range(0.5..3.0), rng.random_range(0.5..3.0)], 0.5);
        (gains, config)
    }

    #[test]
    fn pu_update_worked_example() {
        // Floors [1, 0, 0], sigma [1.5, 1, 1]; the rest is water-filled.
        let gains = GainTensor::uniform(2, 3, 1.0, 0.0).unwrap();
        for (budget, expect) in [
            (3.0, [1.0 + 1.0 / 3.0, 5.0 / 6.0, 5.0 / 6.0]),
            (4.0, [1.0 + 2.0 / 3.0, 7.0 / 6.0, 7.0 / 6.0]),
        ] {
            let config = NetworkConfig::single_pu(3, vec![budget, 1.0], 1.0, 0.5).unwrap();
            let p = pu_update(0, &[0.0; 3], &[0.5, 0.0, 0.0], &gains, &config, 1.0).unwrap();
            for (x, e) in p.iter().zip(expect) {
                assert_relative_eq!(*x, e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pu_update_without_interference_is_waterfill() {
        let config = NetworkConfig::single_pu(3, vec![3.0, 1.0], 1.0, 0.1).unwrap();
        let mut gains = GainTensor::uniform(2, 3, 1.0, 0.0).unwrap();
        gains.set(0, 0, 1, 0.5).unwrap();
        gains.set(0, 0, 2, 0.25).unwrap();
        let p = pu_update(0, &[1.0; 3], &[0.0; 3], &gains, &config, 1.0).unwrap();
        let expect = waterfill(&[1.0, 2.0, 4.0], 3.0).unwrap().powers;
        for (x, e) in p.iter().zip(expect) {
            assert_relative_eq!(*x, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn pu_update_fixed_point_for_any_step() {
        let config = NetworkConfig::single_pu(3, vec![4.0, 1.0], 1.0, 0.5).unwrap();
        let gains = GainTensor::uniform(2, 3, 1.0, 0.0).unwrap();
        let i = [0.5, 0.2, 0.0];
        let target = pu_update(0, &[0.0; 3], &i, &gains, &config, 1.0).unwrap();
        for eta in [0.01, 0.3, 0.9] {
            let p = pu_update(0, &target, &i, &gains, &config, eta).unwrap();
            for (a, b) in p.iter().zip(&target) {
                assert_relative_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn pu_update_reports_infeasible_floors() {
        let config = NetworkConfig::single_pu(2, vec![1.0, 1.0], 1.0, 0.1).unwrap();
        let gains = GainTensor::uniform(2, 2, 1.0, 0.0).unwrap();
        match pu_update(0, &[0.5, 0.5], &[0.1, 0.05], &gains, &config, 0.5) {
            Err(Error::InfeasibleIsr { pu, deficit, .. }) => {
                assert_eq!(pu, Some(0));
                assert_relative_eq!(deficit, 0.5, epsilon = 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tau_membership() {
        let s = TauSchedule::Stride { stride: 3 };
        let hits: Vec<usize> = (0..13).filter(|&n| s.contains(n)).collect();
        assert_eq!(hits, vec![3, 6, 9, 12]);
        let e = TauSchedule::Explicit { ticks: vec![1, 2, 5] };
        let hits: Vec<usize> = (0..15).filter(|&n| e.contains(n)).collect();
        assert_eq!(hits, vec![1, 2, 5, 8, 11, 14]);
        assert!(TauSchedule::Explicit { ticks: vec![2, 2] }.validate().is_err());
    }

    #[test]
    fn classify_constant_trace() {
        let p = PowerProfile::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let trace = vec![p; 60];
        assert_eq!(classify(&trace, &[1.0; 60], 1e-9, 50), TraceStatus::Converged);
    }

    #[test]
    fn classify_period_two() {
        let a = PowerProfile::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = PowerProfile::from_rows(&[vec![2.0, 1.0]]).unwrap();
        let trace: Vec<_> = (0..60).map(|n| if n % 2 == 0 { a.clone() } else { b.clone() }).collect();
        let u: Vec<f64> = (0..60).map(|n| (n % 2) as f64).collect();
        assert_eq!(classify(&trace, &u, 1e-9, 50), TraceStatus::Oscillating);
    }

    #[test]
    fn classify_slow_drift() {
        let trace: Vec<_> = (1..=200)
            .map(|n| PowerProfile::from_rows(&[vec![1.0 - 1.0 / n as f64]]).unwrap())
            .collect();
        let u: Vec<f64> = (1..=200).map(|n| 1.0 - 1.0 / n as f64).collect();
        assert_eq!(classify(&trace, &u, 1e-9, 50), TraceStatus::MaxIterations);
    }

    #[test]
    fn classify_damped_alternation_is_not_a_cycle() {
        // Decaying alternation stays above tol but never repeats.
        let trace: Vec<_> = (0..100)
            .map(|n| PowerProfile::from_rows(&[vec![1.0 + 0.99f64.powi(n) * if n % 2 == 0 { 1.0 } else { -1.0 }]]).unwrap())
            .collect();
        let u: Vec<f64> = trace.iter().map(|p| p.get(0, 0)).collect();
        assert_eq!(classify(&trace, &u, 1e-9, 50), TraceStatus::MaxIterations);
    }

    #[test]
    fn alg2_zero_su_budgets_reach_waterfill_in_one_round() {
        let config = cfg(vec![6.0, 0.0, 0.0], 0.1);
        let mut gains = GainTensor::uniform(3, 3, 1.0, 0.3).unwrap();
        gains.set(0, 0, 1, 0.4).unwrap();
        let schedule = IterationSchedule {
            eta: 1.0,
            ..Default::default()
        };
        let trace = run_alg2(&gains, &config, &schedule).unwrap();
        assert_eq!(trace.status, TraceStatus::Converged);
        assert_eq!(trace.converged_at, Some(1));
        let wf = pu_waterfill(&gains, &config);
        for (a, b) in trace.final_profile().row(0).iter().zip(&wf) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn alg3_zero_su_budgets_reach_waterfill() {
        let config = cfg(vec![6.0, 0.0, 0.0], 0.1);
        let mut gains = GainTensor::uniform(3, 3, 1.0, 0.3).unwrap();
        gains.set(0, 0, 2, 0.2).unwrap();
        let schedule = IterationSchedule {
            delta: 0.3,
            tau: TauSchedule::Stride { stride: 1 },
            ..Default::default()
        };
        let trace = run_alg3(&gains, &config, &schedule).unwrap();
        assert_eq!(trace.status, TraceStatus::Converged);
        let wf = pu_waterfill(&gains, &config);
        for (a, b) in trace.final_profile().row(0).iter().zip(&wf) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn alg4_single_pu_follows_alg2_with_unit_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let (gains, config) = random_instance(&mut rng, 0.3);
            let s2 = IterationSchedule {
                eta: 1.0,
                max_outer: 40,
                ..Default::default()
            };
            let s4 = IterationSchedule {
                eta: 0.5,
                max_outer: 40,
                tol: 1e-14,
                ..Default::default()
            };
            let (Ok(t2), Ok(t4)) = (run_alg2(&gains, &config, &s2), run_alg4(&gains, &config, &s4)) else {
                continue;
            };
            for (a, b) in t2.iterates.iter().zip(&t4.iterates).take(30) {
                assert!(a.max_abs_diff(b) < 1e-9, "diff {}", a.max_abs_diff(b));
            }
        }
    }

    #[test]
    fn alg4_decoupled_pus_reach_waterfill_in_one_round() {
        let noise = vec![vec![1.0; 3]; 4];
        let config = NetworkConfig::new(3, vec![0, 1], vec![2, 3], vec![5.0, 4.0, 0.0, 0.0], noise, 0.1).unwrap();
        let mut gains = GainTensor::uniform(4, 3, 1.0, 0.2).unwrap();
        for f in 0..3 {
            gains.set(0, 1, f, 0.0).unwrap();
            gains.set(1, 0, f, 0.0).unwrap();
        }
        gains.set(1, 1, 0, 0.3).unwrap();
        let schedule = IterationSchedule {
            eta_per_pu: Some(vec![1.0, 1.0]),
            ..Default::default()
        };
        let trace = run_alg4(&gains, &config, &schedule).unwrap();
        assert_eq!(trace.status, TraceStatus::Converged);
        assert_eq!(trace.converged_at, Some(1));
        let wf0 = waterfill(&[1.0; 3], 5.0).unwrap().powers;
        let wf1 = waterfill(&[1.0 / 0.3, 1.0, 1.0], 4.0).unwrap().powers;
        for f in 0..3 {
            assert_relative_eq!(trace.final_profile().get(0, f), wf0[f], epsilon = 1e-12);
            assert_relative_eq!(trace.final_profile().get(1, f), wf1[f], epsilon = 1e-12);
        }
    }

    #[test]
    fn floor_construction_after_each_pu_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (gains, config) = random_instance(&mut rng, 0.3);
        let eta = 0.2;
        let schedule = IterationSchedule {
            eta,
            max_outer: 60,
            ..Default::default()
        };
        let trace = run_alg2(&gains, &config, &schedule).unwrap();
        let rho = config.isr_threshold();
        for n in 1..trace.len() {
            let prev = &trace.iterates[n - 1];
            for f in 0..3 {
                let i = interference(prev, &gains, 0, f);
                let bound = (1.0 - eta) * prev.get(0, f) + eta * i / (rho * gains.get(0, 0, f));
                assert!(trace.iterates[n].get(0, f) >= bound - 1e-12);
            }
        }
    }

    #[test]
    fn converged_alg2_is_joint_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        for _ in 0..30 {
            let (gains, config) = random_instance(&mut rng, 0.3);
            let schedule = IterationSchedule::default();
            let Ok(trace) = run_alg2(&gains, &config, &schedule) else { continue };
            if trace.status != TraceStatus::Converged {
                continue;
            }
            checked += 1;
            let p = trace.final_profile();
            let i = measured(p, &gains, &config, 0);
            let next = pu_update(0, p.row(0), &i, &gains, &config, 1.0).unwrap();
            for (a, b) in next.iter().zip(p.row(0)) {
                assert!((a - b).abs() <= 10.0 * schedule.tol / schedule.eta);
            }
            assert!(verify_ne(p, &gains, &config, 10.0 * schedule.tol).unwrap().is_ne);
            assert!(trace.final_worst_isr() <= config.isr_threshold() + 1e-8);
        }
        assert!(checked >= 20, "only {checked} converged");
    }

    #[test]
    fn small_steps_eventually_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for case in 0..100 {
            let (gains, config) = random_instance(&mut rng, 0.2);
            let found = [0.5, 0.25, 0.1, 0.05, 0.01].iter().any(|&eta| {
                let schedule = IterationSchedule {
                    eta,
                    max_outer: 5000,
                    tol: 1e-8,
                    ..Default::default()
                };
                matches!(run_alg2(&gains, &config, &schedule), Ok(t) if t.status == TraceStatus::Converged)
            });
            assert!(found, "case {case}: no step size converged");
        }
    }

    #[test]
    fn alg2_and_alg3_agree_when_both_converge() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut compared = 0;
        for _ in 0..20 {
            let (gains, config) = random_instance(&mut rng, 0.3);
            let schedule = IterationSchedule {
                max_outer: 5000,
                ..Default::default()
            };
            let (Ok(a), Ok(b)) = (run_alg2(&gains, &config, &schedule), run_alg3(&gains, &config, &schedule)) else {
                continue;
            };
            if a.status == TraceStatus::Converged && b.status == TraceStatus::Converged {
                compared += 1;
                for (x, y) in a.final_utilities().iter().zip(b.final_utilities()) {
                    assert!((x - y).abs() <= 1e-3, "{x} vs {y}");
                }
            }
        }
        assert!(compared >= 10);
    }

    #[test]
    fn alg3_rejects_isr_violating_start() {
        let config = cfg(vec![3.0, 1.0, 1.0], 0.1);
        let gains = GainTensor::uniform(3, 3, 1.0, 0.5).unwrap();
        let schedule = IterationSchedule {
            init_su: Some(vec![vec![1.0, 0.0, 0.0], vec![0.0; 3]]),
            ..Default::default()
        };
        assert!(matches!(run_alg3(&gains, &config, &schedule), Err(Error::Usage(_))));
    }

    #[test]
    fn trace_table_shape() {
        let config = cfg(vec![6.0, 1.0, 1.0], 0.5);
        let gains = GainTensor::uniform(3, 3, 1.0, 0.1).unwrap();
        let trace = run_alg2(&gains, &config, &IterationSchedule::default()).unwrap();
        let full = trace_table(&trace, &config, 1);
        assert_eq!(full.len(), trace.len() * 9);
        let thin = trace_table(&trace, &config, 10);
        let kept = (0..trace.len()).filter(|n| n % 10 == 0 || *n == trace.len() - 1).count();
        assert_eq!(thin.len(), kept * 9);
        let isr = full.column("isr").unwrap();
        assert!(full.rows.iter().filter(|r| r[1] == "1").all(|r| r[isr].is_empty()));
        assert!(full.rows.iter().filter(|r| r[1] == "0").all(|r| !r[isr].is_empty()));
    }

    #[test]
    fn schedule_rejects_bad_steps() {
        let config = cfg(vec![6.0, 1.0, 1.0], 0.5);
        for bad in [0.0, -0.1, 1.5, f64::NAN] {
            let s = IterationSchedule {
                eta: bad,
                ..Default::default()
            };
            assert!(matches!(s.validate(&config), Err(Error::Config { .. })));
        }
    }
}
