//! Run configuration files (JSON, `schema: 1`).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use specshare::{ChannelModel, Error, GainTensor, IterationSchedule, NeOptions, NetworkConfig, SearchSpec};

pub const SCHEMA: u32 = 1;

fn default_symmetry_tol() -> f64 {
    1e-9
}

/// A single run (fixed `gains`) or a Monte Carlo ensemble (`channel`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    /// Source of all randomness; overrides `search.seed`.
    #[serde(default)]
    pub seed: u64,
    pub network: NetworkConfig,
    /// Power gains `gains[tx][rx][f]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelModel>,
    /// Channel draws; 1 when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realizations: Option<usize>,
    /// Fixed PU rows (in `network.pus` order) for `ne`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pu_powers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub ne: NeOptions,
    #[serde(default)]
    pub schedule: IterationSchedule,
    #[serde(default)]
    pub search: SearchSpec,
    /// Relative tolerance of the symmetric-channel check.
    #[serde(default = "default_symmetry_tol")]
    pub symmetry_tol: f64,
}

/// Parse or validation failure, with enough context to find the culprit.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    /// Dotted path of the offending field, when known.
    pub field: Option<String>,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let (Some(l), Some(c)) = (self.line, self.column) {
            write!(f, "line {l}, column {c}: ")?;
        }
        if let Some(field) = &self.field {
            write!(f, "field `{field}`: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn new(message: impl Into<String>) -> Self {
        ConfigError {
            field: None,
            line: None,
            column: None,
            message: message.into(),
        }
    }
}

impl From<Error> for ConfigError {
    fn from(e: Error) -> Self {
        let field = match &e {
            Error::Config { field, .. } => Some(field.clone()),
            _ => None,
        };
        ConfigError {
            field,
            line: None,
            column: None,
            message: e.to_string(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            ConfigError {
                field: (path != ".").then_some(path),
                line: Some(inner.line()),
                column: Some(inner.column()),
                message: inner.to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let field = |f: &str, m: &str| ConfigError {
            field: Some(f.into()),
            ..ConfigError::new(m)
        };
        if self.schema != SCHEMA {
            return Err(field("schema", &format!("unsupported schema {}, expected {SCHEMA}", self.schema)));
        }
        match (&self.gains, &self.channel) {
            (Some(_), Some(_)) => return Err(field("gains", "give either `gains` or `channel`, not both")),
            (None, None) => return Err(field("channel", "one of `gains` or `channel` is required")),
            (Some(_), None) if self.realizations.is_some() => {
                return Err(field("realizations", "only meaningful with a random `channel`"))
            }
            _ => {}
        }
        if self.realizations == Some(0) {
            return Err(field("realizations", "must be at least 1"));
        }
        if let Some(g) = &self.gains {
            let g = GainTensor::from_nested(g).map_err(|e| prefix(e, "gains"))?;
            if g.n_users() != self.network.n_users() || g.n_subchannels() != self.network.n_subchannels() {
                return Err(field(
                    "gains",
                    &format!(
                        "shape {}x{}x{} does not match the network ({} users, {} sub-channels)",
                        g.n_users(),
                        g.n_users(),
                        g.n_subchannels(),
                        self.network.n_users(),
                        self.network.n_subchannels()
                    ),
                ));
            }
        }
        if let Some(c) = &self.channel {
            c.validate(&self.network).map_err(|e| prefix(e, "channel"))?;
        }
        if let Some(rows) = &self.pu_powers {
            let n = self.network.n_subchannels();
            if rows.len() != self.network.pus().len() {
                return Err(field(
                    "pu_powers",
                    &format!("expected {} rows, got {}", self.network.pus().len(), rows.len()),
                ));
            }
            for (r, row) in rows.iter().enumerate() {
                if row.len() != n || row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                    return Err(field(&format!("pu_powers[{r}]"), &format!("expected {n} finite nonnegative powers")));
                }
            }
        }
        if !(self.ne.tol > 0.0) || self.ne.max_iter == 0 {
            return Err(field("ne", "tol must be positive and max_iter at least 1"));
        }
        self.schedule.validate(&self.network).map_err(|e| prefix(e, "schedule"))?;
        self.search.validate()?;
        if !(self.symmetry_tol > 0.0) {
            return Err(field("symmetry_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn gain_tensor(&self) -> Option<GainTensor> {
        self.gains.as_ref().map(|g| GainTensor::from_nested(g).expect("validated"))
    }
}

/// Qualify a core config error's field with the section it came from.
fn prefix(e: Error, section: &str) -> ConfigError {
    let mut ce = ConfigError::from(e);
    ce.field = Some(match ce.field {
        Some(f) if !f.starts_with(section) => format!("{section}.{f}"),
        Some(f) => f,
        None => section.to_string(),
    });
    ce
}
