//! Batch front end for the `specshare` solvers: JSON run configs in, CSV and
//! JSON artifacts out, plus one-command reproduction of each figure's data.

pub mod commands;
pub mod config;
pub mod figures;
pub mod output;

pub use commands::Exit;
pub use config::{ConfigError, RunConfig};
