//! Closed-form equilibrium of the two-SU game on a perfectly symmetric channel.
//!
//! On such a channel both SUs see the same effective noise `sigma_f` on every
//! sub-channel and each sees the other scaled by a common cross ratio `c < 1`.
//! After sorting sub-channels by `sigma`, the SU with the smaller budget is
//! active on the first `k2` sub-channels and the other on the first `k1 >= k2`.
//! Both breakpoints come from monotone threshold sequences, so a linear scan
//! finds them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, SymmetryFamily};
use crate::model::{GainTensor, NetworkConfig, PowerProfile};
use crate::waterfill::waterfill;

/// Default relative tolerance for [`detect_symmetric`].
pub const DEFAULT_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetricParams {
    /// Common cross-to-direct gain ratio.
    pub c: f64,
    /// Effective noise-over-gain per sub-channel, original numbering.
    pub sigma: Vec<f64>,
    /// `perm[k]` is the original index of the `k`-th smallest sigma (stable).
    pub perm: Vec<usize>,
    /// SU user indices, larger budget first (ties keep index order).
    pub su_order: [usize; 2],
}

impl SymmetricParams {
    /// Build directly from a cross ratio and effective noise levels.
    pub fn new(c: f64, sigma: Vec<f64>, su_order: [usize; 2]) -> Result<Self> {
        if !(0.0..1.0).contains(&c) {
            return Err(Error::Domain(format!("cross ratio must lie in [0, 1), got {c}")));
        }
        if let Some(s) = sigma.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::Domain(format!("sigma entries must be positive and finite, got {s}")));
        }
        let mut perm: Vec<usize> = (0..sigma.len()).collect();
        perm.sort_by(|&a, &b| sigma[a].total_cmp(&sigma[b]));
        Ok(SymmetricParams {
            c,
            sigma,
            perm,
            su_order,
        })
    }

    pub fn sorted_sigma(&self) -> Vec<f64> {
        self.perm.iter().map(|&f| self.sigma[f]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedFormNe {
    /// Powers of the larger-budget SU, original sub-channel numbering.
    pub p_major: Vec<f64>,
    /// Powers of the smaller-budget SU, original sub-channel numbering.
    pub p_minor: Vec<f64>,
    /// Number of sorted sub-channels used by the larger-budget SU.
    pub k1: usize,
    /// Number of sorted sub-channels used by the smaller-budget SU.
    pub k2: usize,
    pub t1: f64,
    pub t2: f64,
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let scale = a.abs().max(b.abs());
    if !scale.is_finite() || scale.is_nan() {
        return f64::INFINITY;
    }
    (a - b).abs() / scale
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        f64::NAN
    } else {
        f64::INFINITY
    }
}

/// Check the perfectly-symmetric conditions for one PU and two SUs.
///
/// `pu_powers` supplies the PU row used in `sigma`; SU rows are ignored.
pub fn detect_symmetric(
    pu_powers: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    rel_tol: f64,
) -> Result<SymmetricParams> {
    pu_powers.check_matches(config)?;
    gains.check_matches(config)?;
    if config.pus().len() != 1 || config.sus().len() != 2 {
        return Err(Error::UnsupportedCardinality {
            pus: config.pus().len(),
            sus: config.sus().len(),
        });
    }
    let pu = config.pus()[0];
    let (a, b) = (config.sus()[0], config.sus()[1]);
    let n = config.n_subchannels();

    let c = ratio(gains.get(a, b, 0), gains.get(b, b, 0));
    let mut worst = 0.0f64;
    for f in 0..n {
        for x in [
            ratio(gains.get(a, b, f), gains.get(b, b, f)),
            ratio(gains.get(b, a, f), gains.get(a, a, f)),
        ] {
            worst = worst.max(rel_err(x, c));
        }
    }
    if worst > rel_tol || c.is_nan() {
        return Err(Error::SymmetryMismatch {
            family: SymmetryFamily::CrossRatio,
            worst_rel_err: worst,
        });
    }

    let mut worst = 0.0f64;
    for f in 0..n {
        worst = worst.max(rel_err(
            ratio(config.noise(a, f), gains.get(a, a, f)),
            ratio(config.noise(b, f), gains.get(b, b, f)),
        ));
    }
    if worst > rel_tol {
        return Err(Error::SymmetryMismatch {
            family: SymmetryFamily::NoiseRatio,
            worst_rel_err: worst,
        });
    }

    let mut worst = 0.0f64;
    for f in 0..n {
        let x = ratio(gains.get(pu, a, f), gains.get(a, a, f));
        let y = ratio(gains.get(pu, b, f), gains.get(b, b, f));
        if !(x.is_nan() && y.is_nan()) {
            worst = worst.max(rel_err(x, y));
        }
    }
    if worst > rel_tol {
        return Err(Error::SymmetryMismatch {
            family: SymmetryFamily::PuRatio,
            worst_rel_err: worst,
        });
    }

    if c >= 1.0 {
        return Err(Error::Domain(format!("cross ratio {c} is not below 1")));
    }

    let sigma = (0..n)
        .map(|f| (config.noise(a, f) + pu_powers.get(pu, f) * gains.get(pu, a, f)) / gains.get(a, a, f))
        .collect();
    let su_order = if config.budget(b) > config.budget(a) {
        [b, a]
    } else {
        [a, b]
    };
    SymmetricParams::new(c, sigma, su_order)
}

/// Closed-form equilibrium for budgets `budget_major >= budget_minor`.
pub fn closed_form_ne(
    params: &SymmetricParams,
    budget_major: f64,
    budget_minor: f64,
) -> Result<ClosedFormNe> {
    if !(budget_minor >= 0.0 && budget_major >= budget_minor && budget_major.is_finite()) {
        return Err(Error::Usage(format!(
            "closed form expects budgets ordered major >= minor >= 0, got {budget_major} and {budget_minor}"
        )));
    }
    let c = params.c;
    let s = params.sorted_sigma();
    let n = s.len();
    let unsort = |sorted: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (k, &f) in params.perm.iter().enumerate() {
            out[f] = sorted[k];
        }
        out
    };

    if budget_minor == 0.0 {
        let wf = waterfill(&params.sigma, budget_major)?;
        let k1 = wf.active_set.len();
        return Ok(ClosedFormNe {
            p_major: wf.powers,
            p_minor: vec![0.0; n],
            k1,
            k2: 0,
            t1: wf.level,
            t2: s[0],
        });
    }

    // Prefix sums of sorted sigma: prefix[k] = s[0] + ... + s[k-1].
    let mut prefix = vec![0.0; n + 1];
    for k in 0..n {
        prefix[k + 1] = prefix[k] + s[k];
    }

    // Threshold for the smaller-budget SU to use k sub-channels (1-based k).
    let phi_minor = |k: usize| -> f64 {
        if k > n {
            f64::INFINITY
        } else {
            (k as f64 * s[k - 1] - prefix[k]) / (1.0 + c)
        }
    };
    let k2 = (1..=n)
        .find(|&k| phi_minor(k) < budget_minor && budget_minor <= phi_minor(k + 1))
        .expect("threshold sequence is nondecreasing and unbounded");
    let t2 = ((1.0 + c) * budget_minor + prefix[k2]) / k2 as f64;

    // Threshold for the larger-budget SU to use k > k2 sub-channels.
    let shared: f64 = prefix[k2] + c * t2 * k2 as f64;
    let phi_major = |k: usize| -> f64 {
        if k > n {
            f64::INFINITY
        } else {
            let own = (k - k2) as f64 * s[k - 1] - (prefix[k] - prefix[k2]);
            own + ((1.0 + c) * s[k - 1] * k2 as f64 - shared) / (1.0 + c)
        }
    };
    let k1 = if budget_major <= phi_major(k2 + 1) {
        k2
    } else {
        (k2 + 1..=n)
            .find(|&k| phi_major(k) < budget_major && budget_major <= phi_major(k + 1))
            .expect("threshold sequence is nondecreasing and unbounded")
    };
    let t1 = (budget_major + (prefix[k1] - prefix[k2]) + shared / (1.0 + c)) / k1 as f64;

    let mut major = vec![0.0; n];
    let mut minor = vec![0.0; n];
    for k in 0..n {
        if k < k2 {
            major[k] = t1 - (c * t2 + s[k]) / (1.0 + c);
            minor[k] = (t2 - s[k]) / (1.0 + c);
        } else if k < k1 {
            major[k] = t1 - s[k];
        }
    }

    Ok(ClosedFormNe {
        p_major: unsort(&major),
        p_minor: unsort(&minor),
        k1,
        k2,
        t1,
        t2,
    })
}

/// Detect symmetry and, if it holds, return `pu_powers` with the SU rows
/// replaced by the closed-form equilibrium.
pub fn solve_symmetric(
    pu_powers: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    rel_tol: f64,
) -> Result<(PowerProfile, ClosedFormNe)> {
    let params = detect_symmetric(pu_powers, gains, config, rel_tol)?;
    let [major, minor] = params.su_order;
    let ne = closed_form_ne(&params, config.budget(major), config.budget(minor))?;
    let mut out = pu_powers.clone();
    out.set_row(major, &ne.p_major);
    out.set_row(minor, &ne.p_minor);
    Ok((out, ne))
}
