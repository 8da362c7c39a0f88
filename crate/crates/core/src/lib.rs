//! Simulation, finite-key security analysis and full-parameter optimization
//! of biased decoy-state reference-frame-independent QKD.
//!
//! The pipeline for one operating point is
//! [`channel::simulate_observations`] → [`decoy::estimate_all`] (which
//! applies the [`statistics`] fluctuation bounds) → [`security::key_rate`].
//! [`optimizer::optimize`] maximizes that pipeline over the ten protocol
//! variables, and [`scan`] runs it over distance, β and pulse-count grids.

// `!(x > 0.0)` is the NaN-rejecting form used for every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod decoy;
pub mod error;
pub mod optimizer;
pub mod protocol;
pub mod scan;
pub mod security;
pub mod statistics;

pub use channel::{BasisPair, ChannelParams, Intensity, ObservedStatistics};
pub use decoy::SinglePhotonBounds;
pub use error::{Error, Result};
pub use optimizer::{optimize, OptimizedPoint, OptimizerConfig, Scenario};
pub use protocol::{is_feasible, ProtocolFamily, ProtocolParams};
pub use security::{KeyRateReport, SecurityConfig, SecurityMode};
pub use statistics::FluctuationConfig;
