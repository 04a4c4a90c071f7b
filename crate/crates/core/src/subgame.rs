//! The SUs' non-cooperative power game at fixed PU powers.
//!
//! Each SU maximizes its own sum rate treating everything else as noise, so its
//! best response is a water-fill against the interference it currently sees.
//! [`solve_ne`] iterates those best responses to a fixed point.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{interference, GainTensor, NetworkConfig, PowerProfile};
use crate::waterfill::waterfill;

/// Eigenvalue margin for the positive-definiteness test on the uniqueness matrix.
pub const PD_EIG_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Every SU responds to iterate `k` (simultaneous update).
    #[default]
    Jacobi,
    /// SUs respond in index order, each seeing the updates already made this sweep.
    GaussSeidel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub order: UpdateOrder,
}

impl Default for NeOptions {
    fn default() -> Self {
        NeOptions {
            tol: 1e-8,
            max_iter: 500,
            order: UpdateOrder::Jacobi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeResult {
    /// Full profile: PU rows as supplied, SU rows at the computed equilibrium.
    pub profile: PowerProfile,
    pub iterations: usize,
    pub converged: bool,
    /// Largest entrywise change in the last sweep.
    pub final_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeCheck {
    pub is_ne: bool,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    /// Uniqueness matrix over SUs (in `config.sus()` order).
    pub m_matrix: Vec<Vec<f64>>,
    pub m_positive_definite: bool,
    /// Smallest eigenvalue of the symmetric part of `m_matrix`.
    pub m_min_eigenvalue: f64,
    /// `(inf-norm, 1-norm)` of each sub-channel's cross-ratio matrix.
    pub c_norms: Vec<(f64, f64)>,
    /// Spectral radius of each cross-ratio matrix (informational).
    pub c_spectral_radii: Vec<f64>,
    pub contraction_holds: bool,
}

/// Effective noise-over-gain seen by SU `i` given everyone else's powers.
pub(crate) fn effective_sigma(
    i: usize,
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
) -> Vec<f64> {
    (0..config.n_subchannels())
        .map(|f| {
            let direct = gains.get(i, i, f);
            let num = interference(profile, gains, i, f) + config.noise(i, f);
            if direct > 0.0 {
                num / direct
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

pub(crate) fn best_response_unchecked(
    i: usize,
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
) -> Result<Vec<f64>> {
    let sigma = effective_sigma(i, profile, gains, config);
    Ok(waterfill(&sigma, config.budget(i))?.powers)
}

/// Water-filling response of SU `i` to the other users' current powers.
pub fn best_response(
    i: usize,
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
) -> Result<Vec<f64>> {
    profile.check_matches(config)?;
    gains.check_matches(config)?;
    config.check_su(i)?;
    best_response_unchecked(i, profile, gains, config)
}

/// One sweep of best responses; returns the largest entrywise change.
pub(crate) fn sweep(
    profile: &mut PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    order: UpdateOrder,
) -> Result<f64> {
    let mut delta = 0.0f64;
    match order {
        UpdateOrder::Jacobi => {
            let responses = config
                .sus()
                .iter()
                .map(|&i| best_response_unchecked(i, profile, gains, config))
                .collect::<Result<Vec<_>>>()?;
            for (&i, row) in config.sus().iter().zip(responses) {
                delta = delta.max(row_delta(profile.row(i), &row));
                profile.set_row(i, &row);
            }
        }
        UpdateOrder::GaussSeidel => {
            for &i in config.sus() {
                let row = best_response_unchecked(i, profile, gains, config)?;
                delta = delta.max(row_delta(profile.row(i), &row));
                profile.set_row(i, &row);
            }
        }
    }
    Ok(delta)
}

fn row_delta(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Iterated best responses from `start`.
///
/// PU rows of `start` are the fixed leader powers; its SU rows are the
/// (feasible) initial iterate. Non-convergence is reported in the result.
pub fn solve_ne(
    start: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    opts: &NeOptions,
) -> Result<NeResult> {
    start.check_matches(config)?;
    gains.check_matches(config)?;
    let mut profile = start.clone();
    let mut final_delta = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        final_delta = sweep(&mut profile, gains, config, opts.order)?;
        iterations += 1;
        if final_delta <= opts.tol {
            break;
        }
    }
    Ok(NeResult {
        profile,
        iterations,
        converged: final_delta <= opts.tol,
        final_delta,
    })
}

/// Check that every SU row is (within `tol`) its own best response.
pub fn verify_ne(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    tol: f64,
) -> Result<NeCheck> {
    profile.check_matches(config)?;
    gains.check_matches(config)?;
    let mut max_deviation = 0.0f64;
    for &i in config.sus() {
        let br = best_response_unchecked(i, profile, gains, config)?;
        max_deviation = max_deviation.max(row_delta(profile.row(i), &br));
    }
    Ok(NeCheck {
        is_ne: max_deviation <= tol,
        max_deviation,
    })
}

fn pu_interference(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig, rx: usize, f: usize) -> f64 {
    config
        .pus()
        .iter()
        .map(|&k| profile.get(k, f) * gains.get(k, rx, f))
        .sum()
}

/// Sufficient conditions for uniqueness and for convergence of the best-response iteration.
///
/// `profile` supplies the PU powers; SU rows are ignored.
pub fn diagnostics(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
) -> Result<DiagnosticReport> {
    profile.check_matches(config)?;
    gains.check_matches(config)?;
    let sus = config.sus();
    let s = sus.len();
    let n = config.n_subchannels();

    let mut m = vec![vec![0.0; s]; s];
    for (a, &i) in sus.iter().enumerate() {
        for (b, &j) in sus.iter().enumerate() {
            if a == b {
                m[a][b] = 1.0;
                continue;
            }
            let worst = (0..n)
                .map(|f| {
                    let ratio = gains.get(i, j, f) / gains.get(i, i, f);
                    let load: f64 = config.noise(i, f)
                        + pu_interference(profile, gains, config, i, f)
                        + sus
                            .iter()
                            .map(|&l| gains.get(l, i, f) * config.budget(l))
                            .sum::<f64>();
                    let base = config.noise(j, f) + pu_interference(profile, gains, config, j, f);
                    ratio * load / base
                })
                .fold(f64::NEG_INFINITY, f64::max);
            m[a][b] = -worst;
        }
    }

    let m_min_eigenvalue = if s == 0 {
        f64::INFINITY
    } else {
        let mm = DMatrix::from_fn(s, s, |a, b| 0.5 * (m[a][b] + m[b][a]));
        if mm.iter().all(|x| x.is_finite()) {
            SymmetricEigen::new(mm)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min)
        } else {
            f64::NEG_INFINITY
        }
    };

    let mut c_norms = Vec::with_capacity(n);
    let mut c_spectral_radii = Vec::with_capacity(n);
    for f in 0..n {
        let c = DMatrix::from_fn(s, s, |a, b| {
            if a == b {
                0.0
            } else {
                gains.get(sus[a], sus[b], f) / gains.get(sus[b], sus[b], f)
            }
        });
        let inf_norm = (0..s)
            .map(|a| c.row(a).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let one_norm = (0..s)
            .map(|b| c.column(b).iter().map(|x| x.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        c_norms.push((inf_norm, one_norm));
        let radius = if s == 0 || !c.iter().all(|x| x.is_finite()) {
            f64::NAN
        } else {
            c.complex_eigenvalues()
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max)
        };
        c_spectral_radii.push(radius);
    }
    let contraction_holds = c_norms.iter().all(|&(a, b)| a.min(b) < 1.0);

    Ok(DiagnosticReport {
        m_matrix: m,
        m_positive_definite: m_min_eigenvalue > PD_EIG_TOL,
        m_min_eigenvalue,
        c_norms,
        c_spectral_radii,
        contraction_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn decoupled(n_sus: usize, n_sub: usize) -> (NetworkConfig, GainTensor) {
        let l = n_sus + 1;
        let mut budgets = vec![0.0; l];
        for (k, b) in budgets.iter_mut().enumerate().skip(1) {
            *b = k as f64;
        }
        let config = NetworkConfig::single_pu(n_sub, budgets, 1.0, 0.1).unwrap();
        let mut g = GainTensor::uniform(l, n_sub, 1.0, 0.0).unwrap();
        for f in 0..n_sub {
            for i in 0..l {
                g.set(i, i, f, 1.0 + 0.3 * f as f64 + 0.1 * i as f64).unwrap();
            }
        }
        (config, g)
    }

    #[test]
    fn best_response_symmetric() {
        let config = NetworkConfig::single_pu(2, vec![0.0, 4.0], 1.0, 0.1).unwrap();
        let gains = GainTensor::uniform(2, 2, 1.0, 0.0).unwrap();
        let p = PowerProfile::for_config(&config);
        let br = best_response(1, &p, &gains, &config).unwrap();
        assert_relative_eq!(br[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(br[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn best_response_zero_budget() {
        let config = NetworkConfig::single_pu(2, vec![1.0, 0.0], 1.0, 0.1).unwrap();
        let gains = GainTensor::uniform(2, 2, 1.0, 0.3).unwrap();
        let br = best_response(1, &PowerProfile::for_config(&config), &gains, &config).unwrap();
        assert_eq!(br, vec![0.0, 0.0]);
    }

    #[test]
    fn best_response_rejects_pu() {
        let (config, gains) = decoupled(1, 2);
        assert!(best_response(0, &PowerProfile::for_config(&config), &gains, &config).is_err());
    }

    #[test]
    fn best_response_worked_instance() {
        // One SU whose effective sigma is [1.225, 2.025, 3] through its noise.
        let config = NetworkConfig::new(
            3,
            vec![0],
            vec![1],
            vec![0.0, 5.0],
            vec![vec![1.0; 3], vec![1.225, 2.025, 3.0]],
            0.1,
        )
        .unwrap();
        let gains = GainTensor::uniform(2, 3, 1.0, 0.0).unwrap();
        let br = best_response(1, &PowerProfile::for_config(&config), &gains, &config).unwrap();
        for (p, e) in br.iter().zip([2.525, 1.725, 0.75]) {
            assert_relative_eq!(*p, e, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_su_converges_in_one_sweep() {
        let (config, gains) = decoupled(1, 3);
        let r = solve_ne(&PowerProfile::for_config(&config), &gains, &config, &NeOptions::default()).unwrap();
        assert!(r.converged);
        // One sweep moves to the water-fill, the next confirms it.
        assert!(r.iterations <= 2);
        let expected = best_response(1, &r.profile, &gains, &config).unwrap();
        assert_eq!(r.profile.row(1), expected.as_slice());
    }

    #[test]
    fn decoupled_sus_converge_immediately() {
        let (config, gains) = decoupled(3, 4);
        let r = solve_ne(&PowerProfile::for_config(&config), &gains, &config, &NeOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        let check = verify_ne(&r.profile, &gains, &config, 0.0).unwrap();
        assert!(check.is_ne);
        assert_eq!(check.max_deviation, 0.0);
    }

    #[test]
    fn perturbed_equilibrium_fails_verification() {
        let config = NetworkConfig::single_pu(3, vec![3.0, 2.0, 4.0], 0.5, 0.1).unwrap();
        let mut gains = GainTensor::uniform(3, 3, 1.0, 0.2).unwrap();
        gains.set(1, 2, 1, 0.4).unwrap();
        let mut start = PowerProfile::for_config(&config);
        start.set_row(0, &[1.0, 1.0, 1.0]);
        let opts = NeOptions {
            tol: 1e-10,
            ..Default::default()
        };
        let r = solve_ne(&start, &gains, &config, &opts).unwrap();
        assert!(r.converged);
        assert!(verify_ne(&r.profile, &gains, &config, 1e-8).unwrap().is_ne);
        let mut bad = r.profile.clone();
        bad.set(1, 0, bad.get(1, 0) + 0.1);
        assert!(!verify_ne(&bad, &gains, &config, 1e-8).unwrap().is_ne);
    }

    #[test]
    fn diagnostics_without_cross_gains() {
        let (config, gains) = decoupled(3, 2);
        let d = diagnostics(&PowerProfile::for_config(&config), &gains, &config).unwrap();
        for (a, row) in d.m_matrix.iter().enumerate() {
            for (b, &x) in row.iter().enumerate() {
                assert_eq!(x, if a == b { 1.0 } else { 0.0 });
            }
        }
        assert!(d.m_positive_definite);
        assert!(d.c_norms.iter().all(|&(a, b)| a == 0.0 && b == 0.0));
        assert!(d.contraction_holds);
    }

    #[test]
    fn diagnostics_symmetric_cross_ratio() {
        for (c, holds) in [(0.4, true), (0.99, true), (1.0, false), (1.5, false)] {
            let config = NetworkConfig::single_pu(2, vec![1.0, 1.0, 1.0], 1.0, 0.1).unwrap();
            let mut gains = GainTensor::uniform(3, 2, 2.0, 0.0).unwrap();
            for f in 0..2 {
                gains.set(1, 2, f, 2.0 * c).unwrap();
                gains.set(2, 1, f, 2.0 * c).unwrap();
            }
            let d = diagnostics(&PowerProfile::for_config(&config), &gains, &config).unwrap();
            for &(inf, one) in &d.c_norms {
                assert_relative_eq!(inf, c, epsilon = 1e-15);
                assert_relative_eq!(one, c, epsilon = 1e-15);
            }
            for &r in &d.c_spectral_radii {
                assert_relative_eq!(r, c, epsilon = 1e-12);
            }
            assert_eq!(d.contraction_holds, holds);
        }
    }

    #[test]
    fn uniqueness_matrix_by_hand() {
        // Two SUs, one sub-channel, PU silent.
        let config = NetworkConfig::new(
            1,
            vec![0],
            vec![1, 2],
            vec![1.0, 2.0, 3.0],
            vec![vec![1.0], vec![0.5], vec![0.25]],
            0.1,
        )
        .unwrap();
        let mut g = GainTensor::uniform(3, 1, 1.0, 0.0).unwrap();
        g.set(1, 1, 0, 2.0).unwrap();
        g.set(2, 2, 0, 4.0).unwrap();
        g.set(1, 2, 0, 0.5).unwrap();
        g.set(2, 1, 0, 0.25).unwrap();
        let d = diagnostics(&PowerProfile::for_config(&config), &g, &config).unwrap();
        // M[1,2] = g12/g11 * (N1 + g11 P1 + g21 P2) / N2 = 0.25 * (0.5 + 4 + 0.75) / 0.25
        assert_relative_eq!(d.m_matrix[0][1], -5.25, epsilon = 1e-12);
        // M[2,1] = g21/g22 * (N2 + g12 P1 + g22 P2) / N1 = 0.0625 * (0.25 + 1 + 12) / 0.5
        assert_relative_eq!(d.m_matrix[1][0], -1.65625, epsilon = 1e-12);
        assert!(!d.m_positive_definite);
    }

    #[test]
    fn strong_interference_fails_contraction() {
        let config = NetworkConfig::single_pu(3, vec![1.0, 1.0, 1.0, 1.0], 1.0, 0.1).unwrap();
        let mut gains = GainTensor::uniform(4, 3, 1.0, 1.5).unwrap();
        for f in 0..3 {
            gains.set(0, 1, f, 0.1).unwrap();
        }
        let d = diagnostics(&PowerProfile::for_config(&config), &gains, &config).unwrap();
        assert!(!d.contraction_holds);
        assert!(d.c_norms.iter().all(|&(a, b)| a >= 1.0 && b >= 1.0));
    }
}
