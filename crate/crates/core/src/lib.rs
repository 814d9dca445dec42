//! BER analysis toolkit for MIMO underwater wireless optical communication
//! (UWOC) links over absorbing, scattering, log-normally fading channels.
//!
//! The crate is organized around the signal path:
//!
//! - [`water_channel`]: Monte Carlo photon transport producing the
//!   turbulence-free impulse response of a water link.
//! - [`fading`]: log-normal turbulence fading (PDF, sampling, and the
//!   Fenton-Wilkinson moment-matched reduction of weighted log-normal sums).
//! - [`link`]: impulse response + transmit pulse → signal/ISI current
//!   coefficients, receiver noise budget, responsivity, Gaussian Q.
//! - [`ber`]: analytical BER engine (exact, upper bound, Fenton-Wilkinson
//!   fast path) for SISO and MIMO with equal gain combining, via
//!   Gauss-Hermite quadrature over the fading distribution.
//! - [`oracle`]: independent validation paths — bit-level Monte Carlo link
//!   simulation and the Gaussian-approximation photon-counting BER.
//! - [`io`]: CSV serialization of impulse responses, gamma sets, and Monte
//!   Carlo run reports.
//! - [`config`]: JSON sweep configuration consumed by the `uwoc` CLI.

// Validation deliberately writes `!(v > 0.0)` rather than `v <= 0.0`: the
// negated form also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ber;
pub mod config;
pub mod constants;
pub mod error;
pub mod fading;
pub mod geom;
pub mod io;
pub mod link;
pub mod oracle;
pub mod water_channel;

pub use error::{Error, Result};
