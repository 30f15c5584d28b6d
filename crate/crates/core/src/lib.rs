//! Numerics for square roots of low-dimensional Cox-Ingersoll-Ross processes.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It covers:
//!
//! * [`params`] / [`path`]: model coefficients, time grids and sample paths.
//! * [`sde`]: seeded full-truncation Euler and exact noncentral chi-square
//!   transitions for `dX = (a - bX)dt + σ√X dW`, the discrete Skorokhod
//!   recursion for the reflected Ornstein-Uhlenbeck process, and common-noise
//!   families `a = σ²/4 + δ`.
//! * [`scale`]: the scale function `S`, speed density `ρ` and the time changes
//!   mapping a CIR path to a reflected Brownian motion and back.
//! * [`local_time`]: occupation densities, the normalized local time of
//!   `Y = √X`, and three evaluations of the singular drift term `L`.
//! * [`convergence`]: approximation of the ROU regulator from both sides of
//!   `a = σ²/4` with per-level convergence tables.
//!
//! Everything here is a pure function of its inputs; randomness enters only
//! through [`rng::PathRng`], which is keyed by `(seed, stream)`.
#![no_std]

extern crate alloc;

pub mod convergence;
pub mod error;
pub mod local_time;
pub(crate) mod math;
pub mod params;
pub mod path;
pub mod quad;
pub mod rng;
pub mod scale;
pub mod sde;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use params::ModelParams;
pub use path::{SamplePath, SchemeDiagnostics, TimeGrid};

/// Seed used by every default configuration and by the acceptance suite.
pub const DEFAULT_SEED: u64 = 1;
