//! Three-user mode-pairing conference key simulation and finite-size
//! security analysis.

pub mod analytic;
pub mod config;
pub mod emitter;
pub mod io;
pub mod optics;
pub mod pairing;
pub mod phase;
pub mod rng;
pub mod security;
pub mod sift;
pub mod sim;
pub mod types;

pub use config::{ConfigError, SystemConfig};
pub use pairing::{PairingError, TripleEvent, pair_clicks};
pub use phase::{PhaseError, ReferenceCounts, SignConvention, XObservation};
pub use security::{DecoyBounds, SecurityAccounting, SecurityError};
pub use sift::{Basis, SiftedEvent, Tallies};
pub use types::*;
