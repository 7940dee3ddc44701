//! Analytic delay model for incremental-redundancy HARQ with an unreliable
//! feedback channel, plus the machinery around it:
//!
//! - [`mi_stats`]: mutual-information statistics over block-Rayleigh fading
//!   and the Gaussian-approximated decoding-failure probabilities;
//! - [`feedback`]: asymmetric ACK/NACK detection error rates;
//! - [`harq_analytics`]: occurrence recursion, outage, M/G/1 queue moments
//!   and the long-term average delay;
//! - [`optimizer`]: delay minimization over attempt lengths and detection
//!   indices under outage and stability constraints;
//! - [`simulator`]: a seeded discrete-event Monte Carlo oracle for every
//!   analytic quantity;
//! - [`config`]: the flat key-value run configuration used by the CLI.

pub mod config;
pub mod error;
pub mod feedback;
pub mod harq_analytics;
pub mod mi_stats;
pub mod numerics;
pub mod optimizer;
pub mod simulator;

pub use error::{Error, Result};
