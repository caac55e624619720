#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Carbon-penalised proportional portfolio insurance with a latent
//! Ornstein-Uhlenbeck factor, under full and partial information.
//!
//! Modules follow the pipeline: [`model`] holds the market and preferences,
//! [`riccati`] solves the value-function coefficients and the filter
//! variance, [`policy`] evaluates the feedback controls, [`filtering`] runs
//! the Kalman-Bucy filter on observed prices, [`simulator`] runs the Monte
//! Carlo engine and [`analysis`] evaluates value functions, loss of utility,
//! efficiency, admissibility and sample statistics.

pub mod analysis;
pub mod error;
pub mod filtering;
pub mod model;
pub mod policy;
pub mod presets;
pub mod riccati;
pub mod simulator;

pub use error::{Error, Result};
pub use model::{InfoMode, MarketModel, MarketParams, Preference, Utility};
pub use riccati::Solution;
