//! Built-in experiment setups for each figure, and the checks run on them.
//!
//! Listed channel spreads are read as standard deviations of the complex
//! coefficient, so every variance below is the square of the listed value.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use specshare::channel::{GainLink, LinkVariance};
use specshare::iterative::TauSchedule;
use specshare::montecarlo::{run_realizations, ExperimentOutput, ExperimentReport, Outcome};
use specshare::report::fmt_f64;
use specshare::{
    Algorithm, ChannelModel, ExperimentSpec, IterationSchedule, NeOptions, NetworkConfig, Propagation, Result,
    SearchSpec, Table,
};

/// Average closed-form NE powers of the two SUs in the symmetric setup.
pub const FIG1_P2: [f64; 3] = [1.4242, 2.0709, 1.5049];
pub const FIG1_P3: [f64; 3] = [0.2676, 0.4432, 0.2892];
pub const FIG7_P1MAX: [f64; 6] = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    Fig1,
    Fig2,
    Fig3To6,
    Fig7,
    Fig8,
}

impl Figure {
    pub const ALL: [Figure; 5] = [Figure::Fig1, Figure::Fig2, Figure::Fig3To6, Figure::Fig7, Figure::Fig8];

    pub fn id(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3To6 => "fig3-6",
            Figure::Fig7 => "fig7",
            Figure::Fig8 => "fig8",
        }
    }

    pub fn default_realizations(self) -> usize {
        match self {
            Figure::Fig1 => 10_000,
            _ => 1000,
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Figure {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Figure::ALL
            .into_iter()
            .find(|f| f.id() == s)
            .ok_or_else(|| format!("unknown figure `{s}` (expected one of fig1, fig2, fig3-6, fig7, fig8)"))
    }
}

fn sd(tx: usize, rx: usize, spread: [f64; 3]) -> LinkVariance {
    LinkVariance {
        tx,
        rx,
        variance: spread.iter().map(|s| s * s).collect(),
    }
}

fn link(target: [usize; 2], source: [usize; 2], scale: f64) -> GainLink {
    GainLink { target, source, scale }
}

fn noise(users: usize, level: f64) -> Vec<Vec<f64>> {
    vec![vec![level; 3]; users]
}

/// Perfectly symmetric channel shared by the closed-form and hierarchy figures.
pub fn symmetric_channel() -> ChannelModel {
    let s = |x: f64| x.sqrt();
    ChannelModel::rayleigh(
        vec![
            sd(0, 0, [1.0; 3]),
            sd(1, 1, [1.0; 3]),
            sd(0, 1, [s(0.2), s(0.3), s(0.4)]),
            sd(1, 0, [0.3, 0.6, 0.5]),
            sd(2, 0, [0.4, 0.5, 0.4]),
        ],
        vec![
            link([2, 2], [1, 1], 1.0),
            link([0, 2], [0, 1], 1.0),
            link([1, 2], [1, 1], 0.5),
            link([2, 1], [1, 1], 0.5),
        ],
    )
}

pub fn fig1_spec(algorithm: Algorithm, realizations: usize, seed: u64) -> ExperimentSpec {
    let network = NetworkConfig::new(3, vec![0], vec![1, 2], vec![11.0, 5.0, 1.0], noise(3, 0.5), 0.1)
        .expect("valid network");
    ExperimentSpec {
        network,
        channel: symmetric_channel(),
        realizations,
        seed,
        algorithm,
        pu_powers: Some(vec![vec![7.0, 1.0, 3.0]]),
        schedule: IterationSchedule::default(),
        search: SearchSpec::default(),
        ne: NeOptions::default(),
    }
}

/// Path-loss channel of the placement figure; `params` is 1 or 2.
pub fn fig2_channel(params: u8) -> ChannelModel {
    let spreads: [(usize, usize, [f64; 3]); 9] = if params == 1 {
        [
            (0, 1, [0.7, 0.5, 0.6]),
            (0, 2, [0.5, 0.5, 0.7]),
            (1, 0, [0.4, 0.5, 0.6]),
            (2, 0, [0.5, 0.5, 0.4]),
            (1, 2, [0.5, 0.5, 0.5]),
            (2, 1, [0.5, 0.5, 0.5]),
            (0, 0, [1.0; 3]),
            (1, 1, [1.0; 3]),
            (2, 2, [1.0; 3]),
        ]
    } else {
        [
            (0, 1, [0.4, 0.5, 0.6]),
            (0, 2, [0.5, 0.5, 0.3]),
            (1, 0, [0.6, 0.5, 0.6]),
            (2, 0, [0.7, 0.5, 0.4]),
            (1, 2, [0.5, 0.3, 0.9]),
            (2, 1, [0.4, 0.5, 0.6]),
            (0, 0, [2.0; 3]),
            (1, 1, [1.0; 3]),
            (2, 2, [1.0; 3]),
        ]
    };
    ChannelModel {
        propagation: Propagation::PathLoss {
            alpha: 2.0,
            area_side: 10.0,
            min_distance: 1.0,
        },
        variances: spreads.iter().map(|&(tx, rx, s)| sd(tx, rx, s)).collect(),
        links: Vec::new(),
    }
}

pub fn fig2_spec(params: u8, algorithm: Algorithm, realizations: usize, seed: u64) -> ExperimentSpec {
    let network = NetworkConfig::new(3, vec![0], vec![1, 2], vec![15.0, 5.0, 6.0], noise(3, 1.0), 0.2)
        .expect("valid network");
    ExperimentSpec {
        network,
        channel: fig2_channel(params),
        realizations,
        seed,
        algorithm,
        pu_powers: None,
        schedule: IterationSchedule {
            eta: 0.1,
            delta: 0.1,
            inner_iters: 10,
            tau: TauSchedule::Stride { stride: 3 },
            ..IterationSchedule::default()
        },
        search: SearchSpec::default(),
        ne: NeOptions::default(),
    }
}

/// Fixed-channel step-size study (parameter set 2). `step` is eta for Alg2 and
/// delta for Alg3.
pub fn step_spec(algorithm: Algorithm, step: f64, realizations: usize, seed: u64) -> ExperimentSpec {
    let network = NetworkConfig::new(3, vec![0], vec![1, 2], vec![25.0, 3.0, 4.0], noise(3, 1.0), 0.1)
        .expect("valid network");
    let channel = ChannelModel::rayleigh(
        vec![
            sd(0, 1, [0.4, 0.5, 0.6]),
            sd(0, 2, [0.5, 0.5, 0.3]),
            sd(1, 0, [0.6, 0.5, 0.6]),
            sd(2, 0, [0.7, 0.5, 0.4]),
            sd(1, 2, [0.5, 0.5, 0.5]),
            sd(2, 1, [0.5, 0.5, 0.5]),
            sd(0, 0, [1.0; 3]),
            sd(1, 1, [1.0; 3]),
            sd(2, 2, [1.0; 3]),
        ],
        Vec::new(),
    );
    ExperimentSpec {
        network,
        channel,
        realizations,
        seed,
        algorithm,
        pu_powers: None,
        schedule: IterationSchedule {
            eta: step,
            delta: step,
            ..IterationSchedule::default()
        },
        search: SearchSpec::default(),
        ne: NeOptions::default(),
    }
}

pub fn fig7_spec(algorithm: Algorithm, p1max: f64, realizations: usize, seed: u64) -> ExperimentSpec {
    let network = NetworkConfig::new(3, vec![0], vec![1, 2], vec![p1max, 5.0, 1.0], noise(3, 0.5), 0.1)
        .expect("valid network");
    ExperimentSpec {
        network,
        channel: symmetric_channel(),
        realizations,
        seed,
        algorithm,
        pu_powers: None,
        schedule: IterationSchedule::default(),
        search: SearchSpec {
            seed,
            ..SearchSpec::default()
        },
        ne: NeOptions::default(),
    }
}

pub fn fig8_spec(realizations: usize, seed: u64) -> ExperimentSpec {
    let network = NetworkConfig::new(3, vec![0, 1], vec![2, 3], vec![15.0, 15.0, 2.0, 6.0], noise(4, 1.0), 0.1)
        .expect("valid network");
    let channel = ChannelModel::rayleigh(
        vec![
            sd(0, 1, [0.5, 0.2, 0.1]),
            sd(0, 2, [0.5, 0.5, 0.3]),
            sd(0, 3, [0.4, 0.5, 0.6]),
            sd(1, 0, [0.1, 0.6, 0.1]),
            sd(1, 2, [0.5, 0.6, 0.3]),
            sd(1, 3, [0.6, 0.6, 0.5]),
            sd(2, 0, [0.3, 0.7, 0.2]),
            sd(2, 1, [0.2, 0.1, 0.5]),
            sd(2, 3, [0.6, 0.8, 0.6]),
            sd(3, 0, [0.4, 0.3, 0.2]),
            sd(3, 1, [0.2, 0.3, 0.3]),
            sd(3, 2, [0.5, 0.6, 0.7]),
            sd(0, 0, [1.0; 3]),
            sd(1, 1, [1.0; 3]),
            sd(2, 2, [0.5; 3]),
            sd(3, 3, [0.5; 3]),
        ],
        Vec::new(),
    );
    ExperimentSpec {
        network,
        channel,
        realizations,
        seed,
        algorithm: Algorithm::Alg4,
        pu_powers: None,
        schedule: IterationSchedule {
            eta: 0.001,
            eta_per_pu: Some(vec![0.001, 0.001]),
            ..IterationSchedule::default()
        },
        search: SearchSpec::default(),
        ne: NeOptions::default(),
    }
}

/// One checked quantity; `criterion` numbers the acceptance criterion it feeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub criterion: Option<u32>,
    pub name: String,
    pub observed: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    fn new(criterion: Option<u32>, name: impl Into<String>, observed: f64, target: impl Into<String>, pass: bool) -> Self {
        Check {
            criterion,
            name: name.into(),
            observed,
            target: target.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedReport {
    pub name: String,
    pub report: ExperimentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureSummary {
    pub schema: u32,
    pub figure: String,
    pub seed: u64,
    pub realizations: usize,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub runs: Vec<NamedReport>,
}

pub struct FigureOutput {
    pub summary: FigureSummary,
    /// CSV tables by file name.
    pub tables: Vec<(String, Table)>,
    /// Resolved experiment specs by run name.
    pub specs: Vec<(String, ExperimentSpec)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReproduceOptions {
    pub seed: u64,
    pub realizations: Option<usize>,
    pub threads: Option<usize>,
}

fn max_rel_err(got: &[f64], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(g, w)| ((g - w) / w).abs())
        .fold(0.0, f64::max)
}

/// Mean SU powers of the closed-form ensemble against the published averages.
pub fn check_fig1_means(report: &ExperimentReport) -> Vec<Check> {
    [("mean p2", 1, &FIG1_P2), ("mean p3", 2, &FIG1_P3)]
        .into_iter()
        .map(|(name, user, want)| {
            let err = max_rel_err(&report.mean_powers[user], want);
            Check::new(Some(1), format!("{name} max relative error"), err, "<= 0.05", err <= 0.05)
        })
        .collect()
}

/// Largest ISR excess over all converged outputs of `reports`.
pub fn check_isr<'a>(reports: impl IntoIterator<Item = &'a ExperimentReport>, rho: f64) -> Check {
    let worst = reports
        .into_iter()
        .filter_map(|r| r.max_converged_isr)
        .fold(f64::NEG_INFINITY, f64::max);
    let excess = if worst.is_finite() { worst - rho } else { f64::NEG_INFINITY };
    Check::new(Some(6), "max ISR excess over threshold", excess, "<= 1e-8", !(excess > 1e-8))
}

fn outcome_fraction(report: &ExperimentReport, outcomes: &[Outcome]) -> f64 {
    let n: usize = outcomes
        .iter()
        .map(|o| report.outcome_counts.get(o.as_str()).copied().unwrap_or(0))
        .sum();
    n as f64 / report.realizations as f64
}

/// Small step converges, large step does not (by fraction of all realizations).
pub fn check_step_regime(label: &str, small: &ExperimentReport, large: &ExperimentReport) -> Vec<Check> {
    let conv = outcome_fraction(small, &[Outcome::Converged]);
    let nonconv = outcome_fraction(large, &[Outcome::Oscillating, Outcome::MaxIterations]);
    vec![
        Check::new(Some(5), format!("{label} step 0.1 converged fraction"), conv, ">= 0.95", conv >= 0.95),
        Check::new(
            Some(5),
            format!("{label} step 0.9 oscillating or max-iterations fraction"),
            nonconv,
            ">= 0.5",
            nonconv >= 0.5,
        ),
    ]
}

/// Paired SE/Alg2 comparison at one PU budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyPoint {
    pub p1max: f64,
    pub n_paired: usize,
    /// Per user, SE then Alg2.
    pub mean_se: Vec<f64>,
    pub mean_alg2: Vec<f64>,
    /// Realizations where Alg2 gives the PU more than the SE.
    pub u1_inversions: usize,
}

/// Average over realizations where the SE is feasible and Alg2 converged.
pub fn hierarchy_point(p1max: f64, pu: usize, se: &ExperimentOutput, alg2: &ExperimentOutput) -> HierarchyPoint {
    let users = se.report.mean_utilities.len();
    let mut sum_se = vec![0.0; users];
    let mut sum_a2 = vec![0.0; users];
    let mut n = 0usize;
    let mut inversions = 0;
    for (a, b) in se.realizations.iter().zip(&alg2.realizations) {
        debug_assert_eq!(a.index, b.index);
        if a.outcome != Outcome::Converged || b.outcome != Outcome::Converged {
            continue;
        }
        n += 1;
        for u in 0..users {
            sum_se[u] += a.utilities[u];
            sum_a2[u] += b.utilities[u];
        }
        if b.utilities[pu] > a.utilities[pu] + 1e-6 {
            inversions += 1;
        }
    }
    let d = n.max(1) as f64;
    HierarchyPoint {
        p1max,
        n_paired: n,
        mean_se: sum_se.iter().map(|s| s / d).collect(),
        mean_alg2: sum_a2.iter().map(|s| s / d).collect(),
        u1_inversions: inversions,
    }
}

pub fn check_hierarchy(points: &[HierarchyPoint], pu: usize, sus: &[usize]) -> Vec<Check> {
    let worst_u1 = points
        .iter()
        .map(|p| p.mean_alg2[pu] - p.mean_se[pu])
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_su = points
        .iter()
        .flat_map(|p| sus.iter().map(move |&s| ((p.mean_alg2[s] - p.mean_se[s]) / p.mean_se[s]).abs()))
        .fold(0.0, f64::max);
    let empty = points.iter().any(|p| p.n_paired == 0);
    vec![
        Check::new(
            Some(8),
            "max over sweep of mean u1 (alg2) - mean u1 (SE)",
            worst_u1,
            "<= 1e-6",
            !empty && worst_u1 <= 1e-6,
        ),
        Check::new(
            Some(8),
            "max over sweep and SUs of relative SU utility gap",
            worst_su,
            "<= 0.05",
            !empty && worst_su <= 0.05,
        ),
    ]
}

/// Relative spread of the summed mean-rate curve over its last third.
pub fn curve_tail_variation(curve: &Table) -> f64 {
    let cols: Vec<usize> = (0..curve.header.len())
        .filter(|&c| curve.header[c].starts_with("mean_u"))
        .collect();
    let totals: Vec<f64> = curve
        .rows
        .iter()
        .map(|r| cols.iter().map(|&c| r[c].parse::<f64>().unwrap_or(f64::NAN)).sum())
        .collect();
    let Some(&last) = totals.last() else {
        return f64::INFINITY;
    };
    let tail = &totals[totals.len() - totals.len().div_ceil(3)..];
    let (lo, hi) = tail
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    (hi - lo) / last.abs()
}

pub fn check_multi_pu(report: &ExperimentReport, curve: Option<&Table>) -> Vec<Check> {
    let conv = outcome_fraction(report, &[Outcome::Converged]);
    let variation = curve.map_or(f64::INFINITY, curve_tail_variation);
    vec![
        Check::new(Some(9), "converged fraction", conv, ">= 0.95", conv >= 0.95),
        Check::new(
            Some(9),
            "mean-rate curve last-third variation / final value",
            variation,
            "<= 0.01",
            variation <= 0.01,
        ),
    ]
}

fn means_table(closed: &ExperimentReport, iterative: &ExperimentReport) -> Table {
    let mut t = Table::new(["user", "subchannel", "closed_form", "iterative", "published"]);
    for (user, published) in [(1usize, &FIG1_P2), (2, &FIG1_P3)] {
        for f in 0..3 {
            t.push(vec![
                user.to_string(),
                f.to_string(),
                fmt_f64(closed.mean_powers[user][f]),
                fmt_f64(iterative.mean_powers[user][f]),
                fmt_f64(published[f]),
            ]);
        }
    }
    t
}

fn points_table(points: &[HierarchyPoint]) -> Table {
    let users = points.first().map_or(0, |p| p.mean_se.len());
    let mut header = vec!["p1max".to_string(), "n_paired".to_string()];
    header.extend((0..users).map(|u| format!("mean_u{u}_se")));
    header.extend((0..users).map(|u| format!("mean_u{u}_alg2")));
    header.push("u1_inversions".into());
    let mut t = Table::new(header);
    for p in points {
        let mut row = vec![fmt_f64(p.p1max), p.n_paired.to_string()];
        row.extend(p.mean_se.iter().map(|&x| fmt_f64(x)));
        row.extend(p.mean_alg2.iter().map(|&x| fmt_f64(x)));
        row.push(p.u1_inversions.to_string());
        t.push(row);
    }
    t
}

struct Builder {
    opts: ReproduceOptions,
    checks: Vec<Check>,
    runs: Vec<NamedReport>,
    tables: Vec<(String, Table)>,
    specs: Vec<(String, ExperimentSpec)>,
}

impl Builder {
    fn run(&mut self, name: &str, spec: ExperimentSpec) -> Result<ExperimentOutput> {
        let out = run_realizations(&spec, self.opts.threads)?;
        self.specs.push((name.to_string(), spec));
        self.runs.push(NamedReport {
            name: name.to_string(),
            report: out.report.clone(),
        });
        Ok(out)
    }

    fn curve(&mut self, name: &str, out: &ExperimentOutput) {
        if let Some(c) = &out.curve {
            self.tables.push((format!("{name}_curve.csv"), c.clone()));
        }
    }
}

/// Run every experiment behind `figure` and evaluate its checks.
pub fn reproduce(figure: Figure, opts: ReproduceOptions) -> Result<FigureOutput> {
    let n = opts.realizations.unwrap_or_else(|| figure.default_realizations());
    let seed = opts.seed;
    let mut b = Builder {
        opts,
        checks: Vec::new(),
        runs: Vec::new(),
        tables: Vec::new(),
        specs: Vec::new(),
    };
    match figure {
        Figure::Fig1 => {
            let closed = b.run("fig1_closed_form", fig1_spec(Algorithm::NeClosedForm, n, seed))?;
            let iterative = b.run("fig1_iterative", fig1_spec(Algorithm::NeIterative, n, seed))?;
            b.checks.extend(check_fig1_means(&closed.report));
            let gap = closed
                .report
                .mean_powers
                .iter()
                .flatten()
                .zip(iterative.report.mean_powers.iter().flatten())
                .map(|(a, c)| (a - c).abs())
                .fold(0.0, f64::max);
            b.checks.push(Check::new(
                None,
                "closed-form vs iterative mean powers, max abs difference",
                gap,
                "<= 1e-6",
                gap <= 1e-6,
            ));
            b.tables.push(("fig1_means.csv".into(), means_table(&closed.report, &iterative.report)));
            b.curve("fig1_iterative", &iterative);
        }
        Figure::Fig2 => {
            for params in [1u8, 2] {
                for (alg, label) in [(Algorithm::Alg2, "alg2"), (Algorithm::Alg3, "alg3")] {
                    let name = format!("fig2_params{params}_{label}");
                    let out = b.run(&name, fig2_spec(params, alg, n, seed))?;
                    b.curve(&name, &out);
                }
            }
            let isr = check_isr(b.runs.iter().map(|r| &r.report), 0.2);
            b.checks.push(isr);
        }
        Figure::Fig3To6 => {
            let runs = [
                ("fig3_alg2_eta0.1", Algorithm::Alg2, 0.1),
                ("fig4_alg2_eta0.9", Algorithm::Alg2, 0.9),
                ("fig5_alg3_delta0.1", Algorithm::Alg3, 0.1),
                ("fig6_alg3_delta0.9", Algorithm::Alg3, 0.9),
            ];
            let mut reports = Vec::new();
            for (name, alg, step) in runs {
                let out = b.run(name, step_spec(alg, step, n, seed))?;
                b.curve(name, &out);
                reports.push(out.report);
            }
            b.checks.extend(check_step_regime("alg2", &reports[0], &reports[1]));
            b.checks.extend(check_step_regime("alg3", &reports[2], &reports[3]));
            b.checks.push(check_isr(&reports, 0.1));
        }
        Figure::Fig7 => {
            let mut points = Vec::new();
            for p1 in FIG7_P1MAX {
                let se = b.run(&format!("fig7_se_p1max{p1}"), fig7_spec(Algorithm::Se, p1, n, seed))?;
                let a2 = b.run(&format!("fig7_alg2_p1max{p1}"), fig7_spec(Algorithm::Alg2, p1, n, seed))?;
                points.push(hierarchy_point(p1, 0, &se, &a2));
            }
            b.checks.extend(check_hierarchy(&points, 0, &[1, 2]));
            b.checks.push(check_isr(b.runs.iter().map(|r| &r.report), 0.1));
            b.tables.push(("fig7_points.csv".into(), points_table(&points)));
        }
        Figure::Fig8 => {
            let out = b.run("fig8_alg4", fig8_spec(n, seed))?;
            b.checks.extend(check_multi_pu(&out.report, out.curve.as_ref()));
            b.checks.push(check_isr([&out.report], 0.1));
            b.curve("fig8_alg4", &out);
        }
    }
    let summary = FigureSummary {
        schema: 1,
        figure: figure.id().to_string(),
        seed,
        realizations: n,
        pass: b.checks.iter().all(|c| c.pass),
        checks: b.checks,
        runs: b.runs,
    };
    Ok(FigureOutput {
        summary,
        tables: b.tables,
        specs: b.specs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_ids_round_trip() {
        for f in Figure::ALL {
            assert_eq!(f.id().parse::<Figure>().unwrap(), f);
        }
        assert!("fig9".parse::<Figure>().is_err());
    }

    #[test]
    fn built_in_specs_validate() {
        fig1_spec(Algorithm::NeClosedForm, 1, 0).validate().unwrap();
        fig2_spec(1, Algorithm::Alg2, 1, 0).validate().unwrap();
        fig2_spec(2, Algorithm::Alg3, 1, 0).validate().unwrap();
        step_spec(Algorithm::Alg2, 0.9, 1, 0).validate().unwrap();
        fig7_spec(Algorithm::Se, 20.0, 1, 0).validate().unwrap();
        fig8_spec(1, 0).validate().unwrap();
    }

    #[test]
    fn tail_variation_of_flat_and_moving_curves() {
        let mut t = Table::new(["iter", "mean_u0", "mean_u1", "n_converged"]);
        for i in 0..9 {
            t.push(vec![i.to_string(), "1".into(), format!("{}", if i < 6 { 0.0 } else { 1.0 }), "0".into()]);
        }
        assert_eq!(curve_tail_variation(&t), 0.0);
        t.rows[8][1] = "1.5".into();
        assert!((curve_tail_variation(&t) - 0.5 / 2.5).abs() < 1e-12);
    }

    #[test]
    fn small_fig1_run_has_consistent_checks() {
        let out = reproduce(
            Figure::Fig1,
            ReproduceOptions {
                seed: 3,
                realizations: Some(50),
                threads: Some(1),
            },
        )
        .unwrap();
        let gap = out.summary.checks.iter().find(|c| c.criterion.is_none()).unwrap();
        assert!(gap.pass, "{gap:?}");
        assert_eq!(out.specs.len(), 2);
        assert!(out.tables.iter().any(|(n, _)| n == "fig1_means.csv"));
    }
}
