//! Conditioning diffusions on terminal observations.
//!
//! The pipeline: simulate a diffusion while recording its Brownian
//! increments, turn each path into stochastic-integral regression targets
//! for the conditional score, fit an amortised control network against
//! them, and steer the diffusion with the fitted control. Numerical
//! oracles (closed-form bridge scores, a committor PDE solver, schedule
//! variance formulas) back the test suite.

pub mod conditioning;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod metrics;
pub mod models;
pub mod net;
pub mod oracles;
pub mod rng;
pub mod schedule;
pub mod sde;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
pub use grid::TimeGrid;
