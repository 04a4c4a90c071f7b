//! Leader/follower power allocation for OFDM spectrum sharing.
//!
//! A primary user (PU) leads; secondary users (SUs) follow by playing a
//! non-cooperative water-filling game under the PU's interference. The crate
//! computes follower equilibria (iteratively or, on symmetric channels, in
//! closed form), the leader's optimal anticipating strategy under an
//! interference-to-signal-ratio (ISR) cap, the distributed iterative schemes
//! for when the leader cannot anticipate, and Monte Carlo averages over
//! Rayleigh-fading channel draws.

pub mod channel;
pub mod closedform;
pub mod error;
pub mod iterative;
pub mod model;
pub mod montecarlo;
pub mod report;
pub mod stackelberg;
pub mod subgame;
pub mod waterfill;

pub use error::{Error, Result, SymmetryFamily};
pub use model::{GainTensor, NetworkConfig, PowerProfile, Rates, Role, Violation};
pub use channel::{ChannelModel, Propagation};
pub use closedform::solve_symmetric;
pub use iterative::{IterationSchedule, SolveTrace, TraceStatus};
pub use montecarlo::{Algorithm, ExperimentOutput, ExperimentReport, ExperimentSpec, Outcome};
pub use report::Table;
pub use stackelberg::{SeResult, SearchSpec};
pub use subgame::NeOptions;
