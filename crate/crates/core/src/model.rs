//! Network description and the per-link arithmetic shared by every solver.
//!
//! Users are indexed `0..n_users`. Each user is a transmitter/receiver pair and
//! is either a primary user (PU, a leader) or a secondary user (SU, a follower).
//! Gains are stored as linear power gains `g[i][j][f] = |h_ij^f|^2` from the
//! transmitter of user `i` to the receiver of user `j` on sub-channel `f`.
//! Rates are in nats/s/Hz.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute slack allowed on a power budget.
pub const BUDGET_EPS: f64 = 1e-9;

/// Absolute slack allowed on an ISR threshold.
pub const ISR_EPS: f64 = 1e-9;

/// Role of a user in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Primary,
    Secondary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetworkConfig", into = "RawNetworkConfig")]
pub struct NetworkConfig {
    n_users: usize,
    n_subchannels: usize,
    pus: Vec<usize>,
    sus: Vec<usize>,
    budgets: Vec<f64>,
    noise: Vec<f64>,
    isr_threshold: f64,
}

/// Serialized form of [`NetworkConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawNetworkConfig {
    pub n_subchannels: usize,
    pub pus: Vec<usize>,
    pub sus: Vec<usize>,
    pub budgets: Vec<f64>,
    /// One row of per-sub-channel noise powers per user.
    pub noise: Vec<Vec<f64>>,
    pub isr_threshold: f64,
}

impl TryFrom<RawNetworkConfig> for NetworkConfig {
    type Error = Error;

    fn try_from(raw: RawNetworkConfig) -> Result<Self> {
        NetworkConfig::new(
            raw.n_subchannels,
            raw.pus,
            raw.sus,
            raw.budgets,
            raw.noise,
            raw.isr_threshold,
        )
    }
}

impl From<NetworkConfig> for RawNetworkConfig {
    fn from(c: NetworkConfig) -> Self {
        let noise = (0..c.n_users).map(|i| c.noise_row(i).to_vec()).collect();
        RawNetworkConfig {
            n_subchannels: c.n_subchannels,
            pus: c.pus,
            sus: c.sus,
            budgets: c.budgets,
            noise,
            isr_threshold: c.isr_threshold,
        }
    }
}

impl NetworkConfig {
    /// Build and validate a network description.
    ///
    /// `pus` and `sus` must partition `0..budgets.len()`, with at least one PU and
    /// at least two users overall. Noise entries must be strictly positive and
    /// budgets finite and nonnegative.
    pub fn new(
        n_subchannels: usize,
        pus: Vec<usize>,
        sus: Vec<usize>,
        budgets: Vec<f64>,
        noise: Vec<Vec<f64>>,
        isr_threshold: f64,
    ) -> Result<Self> {
        let n_users = budgets.len();
        if n_users < 2 {
            return Err(Error::config("budgets", "at least two users are required"));
        }
        if n_subchannels == 0 {
            return Err(Error::config("n_subchannels", "must be at least 1"));
        }
        if pus.is_empty() {
            return Err(Error::config("pus", "at least one primary user is required"));
        }
        let mut seen = vec![false; n_users];
        for (name, set) in [("pus", &pus), ("sus", &sus)] {
            for (k, &u) in set.iter().enumerate() {
                if u >= n_users {
                    return Err(Error::config(
                        format!("{name}[{k}]"),
                        format!("user {u} out of range for {n_users} users"),
                    ));
                }
                if seen[u] {
                    return Err(Error::config(
                        format!("{name}[{k}]"),
                        format!("user {u} listed more than once"),
                    ));
                }
                seen[u] = true;
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::config(
                "sus",
                format!("user {u} is neither a PU nor an SU"),
            ));
        }
        for (i, &b) in budgets.iter().enumerate() {
            if !b.is_finite() || b < 0.0 {
                return Err(Error::config(
                    format!("budgets[{i}]"),
                    format!("must be finite and nonnegative, got {b}"),
                ));
            }
        }
        if noise.len() != n_users {
            return Err(Error::config(
                "noise",
                format!("expected {n_users} rows, got {}", noise.len()),
            ));
        }
        let mut flat = Vec::with_capacity(n_users * n_subchannels);
        for (i, row) in noise.iter().enumerate() {
            if row.len() != n_subchannels {
                return Err(Error::config(
                    format!("noise[{i}]"),
                    format!("expected {n_subchannels} entries, got {}", row.len()),
                ));
            }
            for (f, &v) in row.iter().enumerate() {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(
                        format!("noise[{i}][{f}]"),
                        format!("must be finite and strictly positive, got {v}"),
                    ));
                }
            }
            flat.extend_from_slice(row);
        }
        if !(isr_threshold > 0.0 && isr_threshold.is_finite()) {
            return Err(Error::config(
                "isr_threshold",
                format!("must be finite and strictly positive, got {isr_threshold}"),
            ));
        }
        Ok(NetworkConfig {
            n_users,
            n_subchannels,
            pus,
            sus,
            budgets,
            noise: flat,
            isr_threshold,
        })
    }

    /// Single PU (user 0) followed by `n_sus` SUs with uniform noise.
    pub fn single_pu(
        n_subchannels: usize,
        budgets: Vec<f64>,
        noise: f64,
        isr_threshold: f64,
    ) -> Result<Self> {
        let n = budgets.len();
        NetworkConfig::new(
            n_subchannels,
            vec![0],
            (1..n).collect(),
            budgets,
            vec![vec![noise; n_subchannels]; n],
            isr_threshold,
        )
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    pub fn pus(&self) -> &[usize] {
        &self.pus
    }

    pub fn sus(&self) -> &[usize] {
        &self.sus
    }

    pub fn budget(&self, i: usize) -> f64 {
        self.budgets[i]
    }

    pub fn budgets(&self) -> &[f64] {
        &self.budgets
    }

    pub fn noise(&self, i: usize, f: usize) -> f64 {
        self.noise[i * self.n_subchannels + f]
    }

    pub fn noise_row(&self, i: usize) -> &[f64] {
        let n = self.n_subchannels;
        &self.noise[i * n..(i + 1) * n]
    }

    pub fn isr_threshold(&self) -> f64 {
        self.isr_threshold
    }

    pub fn role(&self, i: usize) -> Role {
        if self.pus.contains(&i) {
            Role::Primary
        } else {
            Role::Secondary
        }
    }

    pub fn is_pu(&self, i: usize) -> bool {
        self.pus.contains(&i)
    }

    pub fn is_su(&self, i: usize) -> bool {
        self.sus.contains(&i)
    }

    /// Copy with one user's budget replaced.
    pub fn with_budget(&self, i: usize, budget: f64) -> Result<Self> {
        if i >= self.n_users {
            return Err(Error::Usage(format!("user {i} out of range")));
        }
        if !budget.is_finite() || budget < 0.0 {
            return Err(Error::config(
                format!("budgets[{i}]"),
                format!("must be finite and nonnegative, got {budget}"),
            ));
        }
        let mut out = self.clone();
        out.budgets[i] = budget;
        Ok(out)
    }

    /// Copy with a different ISR threshold.
    pub fn with_isr_threshold(&self, rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::config("isr_threshold", "must be finite and positive"));
        }
        let mut out = self.clone();
        out.isr_threshold = rho;
        Ok(out)
    }

    pub(crate) fn check_user(&self, j: usize) -> Result<()> {
        if j >= self.n_users {
            return Err(Error::Usage(format!(
                "user {j} out of range for {} users",
                self.n_users
            )));
        }
        Ok(())
    }

    pub(crate) fn check_subchannel(&self, f: usize) -> Result<()> {
        if f >= self.n_subchannels {
            return Err(Error::Usage(format!(
                "sub-channel {f} out of range for {} sub-channels",
                self.n_subchannels
            )));
        }
        Ok(())
    }

    pub(crate) fn check_pu(&self, k: usize) -> Result<()> {
        if !self.is_pu(k) {
            return Err(Error::Usage(format!("user {k} is not a primary user")));
        }
        Ok(())
    }

    pub(crate) fn check_su(&self, i: usize) -> Result<()> {
        if !self.is_su(i) {
            return Err(Error::Usage(format!("user {i} is not a secondary user")));
        }
        Ok(())
    }
}

/// Linear power gains `g[tx][rx][f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<Vec<f64>>>", into = "Vec<Vec<Vec<f64>>>")]
pub struct GainTensor {
    n_users: usize,
    n_subchannels: usize,
    g: Vec<f64>,
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for GainTensor {
    type Error = Error;

    fn try_from(nested: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        GainTensor::from_nested(&nested)
    }
}

impl From<GainTensor> for Vec<Vec<Vec<f64>>> {
    fn from(t: GainTensor) -> Self {
        t.to_nested()
    }
}

impl GainTensor {
    /// Build from a row-major `[tx][rx][f]` buffer.
    pub fn new(n_users: usize, n_subchannels: usize, g: Vec<f64>) -> Result<Self> {
        if g.len() != n_users * n_users * n_subchannels {
            return Err(Error::config(
                "gains",
                format!(
                    "expected {} entries for {n_users} users and {n_subchannels} sub-channels, got {}",
                    n_users * n_users * n_subchannels,
                    g.len()
                ),
            ));
        }
        let t = GainTensor {
            n_users,
            n_subchannels,
            g,
        };
        t.check()?;
        Ok(t)
    }

    /// Tensor filled with `value` everywhere.
    pub fn constant(n_users: usize, n_subchannels: usize, value: f64) -> Result<Self> {
        GainTensor::new(
            n_users,
            n_subchannels,
            vec![value; n_users * n_users * n_subchannels],
        )
    }

    /// Direct gains `direct`, every cross gain equal to `cross`.
    pub fn uniform(n_users: usize, n_subchannels: usize, direct: f64, cross: f64) -> Result<Self> {
        let mut g = vec![cross; n_users * n_users * n_subchannels];
        for i in 0..n_users {
            for f in 0..n_subchannels {
                g[(i * n_users + i) * n_subchannels + f] = direct;
            }
        }
        GainTensor::new(n_users, n_subchannels, g)
    }

    pub fn from_nested(nested: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n_users = nested.len();
        let n_sub = nested
            .first()
            .and_then(|r| r.first())
            .map(|v| v.len())
            .unwrap_or(0);
        let mut g = Vec::with_capacity(n_users * n_users * n_sub);
        for (i, row) in nested.iter().enumerate() {
            if row.len() != n_users {
                return Err(Error::config(
                    format!("gains[{i}]"),
                    format!("expected {n_users} receivers, got {}", row.len()),
                ));
            }
            for (j, v) in row.iter().enumerate() {
                if v.len() != n_sub {
                    return Err(Error::config(
                        format!("gains[{i}][{j}]"),
                        format!("expected {n_sub} sub-channels, got {}", v.len()),
                    ));
                }
                g.extend_from_slice(v);
            }
        }
        GainTensor::new(n_users, n_sub, g)
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_users)
            .map(|i| {
                (0..self.n_users)
                    .map(|j| (0..self.n_subchannels).map(|f| self.get(i, j, f)).collect())
                    .collect()
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        for i in 0..self.n_users {
            for j in 0..self.n_users {
                for f in 0..self.n_subchannels {
                    let v = self.get(i, j, f);
                    if !(v >= 0.0 && v.is_finite()) {
                        return Err(Error::config(
                            format!("gains[{i}][{j}][{f}]"),
                            format!("must be finite and nonnegative, got {v}"),
                        ));
                    }
                }
            }
            if (0..self.n_subchannels).all(|f| self.get(i, i, f) == 0.0) {
                return Err(Error::config(
                    format!("gains[{i}][{i}]"),
                    "direct gain is zero on every sub-channel",
                ));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    #[inline]
    pub fn get(&self, tx: usize, rx: usize, f: usize) -> f64 {
        self.g[(tx * self.n_users + rx) * self.n_subchannels + f]
    }

    /// Gains of one link across sub-channels.
    pub fn link(&self, tx: usize, rx: usize) -> &[f64] {
        let start = (tx * self.n_users + rx) * self.n_subchannels;
        &self.g[start..start + self.n_subchannels]
    }

    pub fn set(&mut self, tx: usize, rx: usize, f: usize, value: f64) -> Result<()> {
        if !(value >= 0.0 && value.is_finite()) {
            return Err(Error::Domain(format!("gain must be nonnegative, got {value}")));
        }
        self.g[(tx * self.n_users + rx) * self.n_subchannels + f] = value;
        Ok(())
    }

    pub(crate) fn check_matches(&self, config: &NetworkConfig) -> Result<()> {
        if self.n_users != config.n_users() || self.n_subchannels != config.n_subchannels() {
            return Err(Error::Usage(format!(
                "gain tensor is {}x{}x{}, network has {} users and {} sub-channels",
                self.n_users,
                self.n_users,
                self.n_subchannels,
                config.n_users(),
                config.n_subchannels()
            )));
        }
        Ok(())
    }
}

/// Transmit powers `p[user][f]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct PowerProfile {
    n_users: usize,
    n_subchannels: usize,
    p: Vec<f64>,
}

impl TryFrom<Vec<Vec<f64>>> for PowerProfile {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        PowerProfile::from_rows(&rows)
    }
}

impl From<PowerProfile> for Vec<Vec<f64>> {
    fn from(p: PowerProfile) -> Self {
        p.to_rows()
    }
}

impl PowerProfile {
    pub fn zeros(n_users: usize, n_subchannels: usize) -> Self {
        PowerProfile {
            n_users,
            n_subchannels,
            p: vec![0.0; n_users * n_subchannels],
        }
    }

    pub fn for_config(config: &NetworkConfig) -> Self {
        PowerProfile::zeros(config.n_users(), config.n_subchannels())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_users = rows.len();
        let n_sub = rows.first().map(|r| r.len()).unwrap_or(0);
        let mut p = Vec::with_capacity(n_users * n_sub);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != n_sub {
                return Err(Error::config(
                    format!("powers[{i}]"),
                    format!("expected {n_sub} entries, got {}", r.len()),
                ));
            }
            p.extend_from_slice(r);
        }
        Ok(PowerProfile {
            n_users,
            n_subchannels: n_sub,
            p,
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_users).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_subchannels(&self) -> usize {
        self.n_subchannels
    }

    #[inline]
    pub fn get(&self, i: usize, f: usize) -> f64 {
        self.p[i * self.n_subchannels + f]
    }

    #[inline]
    pub fn set(&mut self, i: usize, f: usize, v: f64) {
        self.p[i * self.n_subchannels + f] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.n_subchannels;
        &self.p[i * n..(i + 1) * n]
    }

    pub fn set_row(&mut self, i: usize, values: &[f64]) {
        let n = self.n_subchannels;
        self.p[i * n..(i + 1) * n].copy_from_slice(values);
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.p
    }

    pub fn total(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    /// Largest absolute entrywise difference.
    pub fn max_abs_diff(&self, other: &PowerProfile) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Copy with every SU row zeroed.
    pub fn with_zero_su_rows(&self, config: &NetworkConfig) -> Self {
        let mut out = self.clone();
        let zeros = vec![0.0; self.n_subchannels];
        for &i in config.sus() {
            out.set_row(i, &zeros);
        }
        out
    }

    pub(crate) fn check_matches(&self, config: &NetworkConfig) -> Result<()> {
        if self.n_users != config.n_users() || self.n_subchannels != config.n_subchannels() {
            return Err(Error::Usage(format!(
                "power profile is {}x{}, network has {} users and {} sub-channels",
                self.n_users,
                self.n_subchannels,
                config.n_users(),
                config.n_subchannels()
            )));
        }
        Ok(())
    }
}

/// Per-user, per-sub-channel rates and their row sums.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r: Vec<Vec<f64>>,
    pub utilities: Vec<f64>,
}

/// Received interference at `rx` on `f` from every other transmitter.
#[inline]
pub fn interference(profile: &PowerProfile, gains: &GainTensor, rx: usize, f: usize) -> f64 {
    (0..profile.n_users())
        .filter(|&i| i != rx)
        .map(|i| profile.get(i, f) * gains.get(i, rx, f))
        .sum()
}

#[inline]
pub(crate) fn sinr_unchecked(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    j: usize,
    f: usize,
) -> f64 {
    let signal = profile.get(j, f) * gains.get(j, j, f);
    if signal == 0.0 {
        return 0.0;
    }
    signal / (interference(profile, gains, j, f) + config.noise(j, f))
}

fn check_all(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> Result<()> {
    profile.check_matches(config)?;
    gains.check_matches(config)
}

/// Signal-to-interference-plus-noise ratio of user `j` on sub-channel `f`.
pub fn sinr(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    j: usize,
    f: usize,
) -> Result<f64> {
    check_all(profile, gains, config)?;
    config.check_user(j)?;
    config.check_subchannel(f)?;
    Ok(sinr_unchecked(profile, gains, config, j, f))
}

/// Utility (sum rate in nats) of user `j`.
pub(crate) fn utility_unchecked(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    j: usize,
) -> f64 {
    (0..config.n_subchannels())
        .map(|f| sinr_unchecked(profile, gains, config, j, f).ln_1p())
        .sum()
}

pub(crate) fn utilities_unchecked(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
) -> Vec<f64> {
    (0..config.n_users())
        .map(|j| utility_unchecked(profile, gains, config, j))
        .collect()
}

pub fn rates(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> Result<Rates> {
    check_all(profile, gains, config)?;
    let r: Vec<Vec<f64>> = (0..config.n_users())
        .map(|j| {
            (0..config.n_subchannels())
                .map(|f| sinr_unchecked(profile, gains, config, j, f).ln_1p())
                .collect()
        })
        .collect();
    let utilities = r.iter().map(|row| row.iter().sum()).collect();
    Ok(Rates { r, utilities })
}

/// Interference-to-signal ratio at the receiver of PU `k` on every sub-channel.
///
/// Interferers are all other users: the SUs, plus the other PUs when there is
/// more than one. A zero-power PU facing nonzero interference has ISR `+inf`;
/// no interference gives 0, including the 0/0 case.
pub fn isr(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    k: usize,
) -> Result<Vec<f64>> {
    check_all(profile, gains, config)?;
    config.check_pu(k)?;
    Ok(isr_unchecked(profile, gains, config, k))
}

pub(crate) fn isr_unchecked(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    k: usize,
) -> Vec<f64> {
    (0..config.n_subchannels())
        .map(|f| isr_ratio(interference(profile, gains, k, f), profile.get(k, f) * gains.get(k, k, f)))
        .collect()
}

#[inline]
pub(crate) fn isr_ratio(interference: f64, signal: f64) -> f64 {
    if interference == 0.0 {
        0.0
    } else if signal == 0.0 {
        f64::INFINITY
    } else {
        interference / signal
    }
}

/// Largest ISR over every PU and sub-channel.
pub(crate) fn worst_isr(profile: &PowerProfile, gains: &GainTensor, config: &NetworkConfig) -> f64 {
    config
        .pus()
        .iter()
        .flat_map(|&k| isr_unchecked(profile, gains, config, k))
        .fold(0.0, f64::max)
}

/// One violated feasibility condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Violation {
    NegativePower { user: usize, subchannel: usize, value: f64 },
    BudgetExceeded { user: usize, excess: f64 },
    IsrExceeded { pu: usize, subchannel: usize, isr: f64, threshold: f64 },
}

/// Every violated constraint of `profile`; an empty list means feasible.
pub fn validate(
    profile: &PowerProfile,
    gains: &GainTensor,
    config: &NetworkConfig,
    check_isr: bool,
) -> Result<Vec<Violation>> {
    check_all(profile, gains, config)?;
    let mut out = Vec::new();
    for i in 0..config.n_users() {
        for f in 0..config.n_subchannels() {
            let v = profile.get(i, f);
            if v < 0.0 || v.is_nan() {
                out.push(Violation::NegativePower {
                    user: i,
                    subchannel: f,
                    value: v,
                });
            }
        }
        let excess = profile.total(i) - config.budget(i);
        if excess > BUDGET_EPS {
            out.push(Violation::BudgetExceeded { user: i, excess });
        }
    }
    if check_isr {
        let rho = config.isr_threshold();
        for &k in config.pus() {
            for (f, value) in isr_unchecked(profile, gains, config, k).into_iter().enumerate() {
                if value > rho + ISR_EPS {
                    out.push(Violation::IsrExceeded {
                        pu: k,
                        subchannel: f,
                        isr: value,
                        threshold: rho,
                    });
                }
            }
        }
    }
    Ok(out)
}
