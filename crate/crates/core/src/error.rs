use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Condition family checked by [`crate::closedform::detect_symmetric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymmetryFamily {
    /// Cross-to-direct gain ratios equal across sub-channels and across the pair.
    CrossRatio,
    /// Noise-over-direct-gain equal across SUs on each sub-channel.
    NoiseRatio,
    /// PU-to-SU over direct gain equal across SUs on each sub-channel.
    PuRatio,
}

impl fmt::Display for SymmetryFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SymmetryFamily::CrossRatio => "cross-ratio",
            SymmetryFamily::NoiseRatio => "noise-ratio",
            SymmetryFamily::PuRatio => "pu-ratio",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller violated a precondition (bad index, wrong role, mismatched dimensions).
    #[error("usage error: {0}")]
    Usage(String),

    /// Numeric input outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration field failed validation.
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// The ISR power floors of a PU exceed its budget.
    #[error("ISR floors exceed the budget{} by {deficit:.6e}{}",
        pu.map(|p| format!(" of PU {p}")).unwrap_or_default(),
        round.map(|r| format!(" at round {r}")).unwrap_or_default())]
    InfeasibleIsr {
        pu: Option<usize>,
        round: Option<usize>,
        deficit: f64,
    },

    /// The leader search never reached an ISR-feasible point.
    #[error("no ISR-feasible leader strategy found after {evaluations} evaluations")]
    InfeasibleLeader { evaluations: usize },

    #[error("closed form needs one PU and two SUs, got {pus} PU(s) and {sus} SU(s)")]
    UnsupportedCardinality { pus: usize, sus: usize },

    #[error("channel is not perfectly symmetric: {family} condition off by {worst_rel_err:.3e} (relative)")]
    SymmetryMismatch {
        family: SymmetryFamily,
        worst_rel_err: f64,
    },

    #[error("{failed} of {total} realizations failed ({infeasible} ISR-infeasible); first error: {first}")]
    ExperimentFailed {
        failed: usize,
        infeasible: usize,
        total: usize,
        first: String,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Attach the PU index and round to an `InfeasibleIsr` error; other variants pass through.
    pub fn with_isr_context(self, pu_index: Option<usize>, round_index: Option<usize>) -> Self {
        match self {
            Error::InfeasibleIsr { pu, round, deficit } => Error::InfeasibleIsr {
                pu: pu.or(pu_index),
                round: round.or(round_index),
                deficit,
            },
            other => other,
        }
    }
}
