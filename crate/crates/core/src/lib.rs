//! Simulation and analytic toolkit for a phase-encoded, time-multiplexed BB84
//! link read out by a high-efficiency, low-background single-photon detector.
//!
//! The crate is split along the physical/classical boundary:
//!
//! * [`photonics`]: Poisson source, link budget, background sources and the
//!   stochastic detector response.
//! * [`protocol`]: Alice/Bob engines, the public-channel wire format and
//!   basis sifting.
//! * [`timing`]: arrival-time histograms, constrained multi-Gaussian fitting
//!   and timing-window selection.
//! * [`security`]: analytic click/error model, threshold and distance solvers,
//!   secret-key fraction.
//! * [`postproc`]: interactive error correction, digest check and privacy
//!   amplification.
//! * [`pipeline`]: a complete session from photons to final key.

pub mod error;
pub mod math;
pub mod photonics;
pub mod pipeline;
pub mod postproc;
pub mod protocol;
pub mod rng;
pub mod security;
pub mod timing;

pub use error::{Error, Result};
