//! Link-budget simulator for drone handover between two cellular base stations.
//!
//! Three activation criteria are modelled: the classic RSRP/A3 rule, a rule on
//! ISAC-sensed distances, and their union (joint). The sensing accuracy comes
//! from the Cramér–Rao bound of OFDM round-trip delay estimation.
//!
//! Module map:
//!
//! - [`scenario`]: parameter set and two-BS geometry
//! - [`channel`]: UMa-AV LoS path loss, shadowing, RSRP and Shannon rate
//! - [`sensing`]: monostatic sensing budget and distance CRLB
//! - [`criteria`]: activation probabilities and effective rate
//! - [`region`]: handover-region solving and the aggregate metrics
//! - [`waveform`]: frequency-domain echo synthesis and ML delay estimation
//! - [`montecarlo`]: event-level validation of the closed forms

// Domain checks use `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod criteria;
pub mod error;
pub mod montecarlo;
pub mod region;
pub mod rng;
pub mod scenario;
pub mod sensing;
pub mod units;
pub mod waveform;

pub use criteria::{Criterion, HoProbabilities};
pub use error::{Error, Result};
pub use region::{EvalGrid, HoRegion, SolverStatus};
pub use scenario::{DronePosition, LinkDistances, Scenario};

/// Speed of light used throughout, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;
