//! Simultaneous-failure probabilities for multivariate Brownian risk models.
//!
//! The model is `u a + c t - W(t)` with `W = Gamma B` a correlated Brownian
//! motion. The crate estimates the probability that at least `k` of the `d`
//! components are below zero at the same time, by path simulation, by
//! non-asymptotic bounds, and by large-threshold asymptotics.

pub mod asymptotics;
pub mod bounds;
pub mod error;
pub mod gauss;
pub mod index;
pub mod qp;
pub mod rng;
pub mod simulator;
pub mod spec;
pub mod stats;

pub use error::{BrmError, Result};
pub use gauss::{CovModel, Lower, PathGrid};
pub use index::IndexSet;
pub use qp::{solve_pi_sigma, QpSolution};
pub use spec::{Horizon, RiskSpec};
pub use stats::McEstimate;
