//! Diffusive Gibbs sampling and score-based MCMC baselines.
//!
//! The crate is organized around the [`targets::EnergyTarget`] contract:
//! an energy `E(x)`, its gradient and an evaluation counter. Samplers in
//! [`samplers`] consume targets; [`kernels`] builds the Gaussian convolution
//! machinery that DiGS relies on; [`metrics`] scores sample sets.

pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod targets;

pub use error::{Error, Result};
pub use targets::{EnergyTarget, Point};
