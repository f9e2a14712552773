//! Exact and Monte Carlo tools for the East kinetically constrained spin model
//! and its long-range "wave" relative.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: bit-packed configurations on `0..=n` with a frozen occupied
//!   origin, East flip rates and the Bernoulli(p) product measure.
//! * [`spectral`]: exact generators of the finite East and wave chains,
//!   spectral gap / relaxation time, Dirichlet forms and Rayleigh quotients.
//! * [`east_sim`]: event-driven simulation of the East process (front
//!   excursions, single-spin autocorrelation).
//! * [`wave_sim`]: event-driven simulation of the wave process, stopping
//!   cycles, the supermartingale estimate and the extension coupling.
//! * [`paths`]: minimum-energy paths, the energy-barrier oracle,
//!   distinguished paths and the comparison constants.
//! * [`crj`]: the coalescing-random-jumps process, its test function and
//!   the certified variational lower bound.

pub mod crj;
pub mod east_sim;
mod error;
pub mod model;
pub mod paths;
pub mod rng;
mod sites;
pub mod spectral;
pub mod stats;
pub mod wave_sim;

pub use error::{Error, Result};
pub use model::{Configuration, Direction, ModelParams, Transition};
