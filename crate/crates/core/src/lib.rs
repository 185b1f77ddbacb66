//! Grey-box thermal system identification for homes with smart thermostats.
//!
//! The crate is organised around the pipeline a thermostat trace goes through:
//!
//! - [`timeseries`]: ingest, impute and turn 5-minute traces into regression rows.
//! - [`rcnet`]: nRnC resistor-capacitor networks, their exact discretization and
//!   the compact difference-equation coefficients identified from data.
//! - [`estimators`]: NNLS for 1R1C, variational Bayesian regression for nRnC,
//!   posterior-as-prior transfer.
//! - [`baselines`]: ARIMAX and persistence comparison models.
//! - [`fleet`]: metadata clustering and synthetic fleets with known ground truth.
//! - [`harness`]: experiment orchestration, RMSE reports and the model library.

pub mod baselines;
pub mod error;
pub mod estimators;
pub mod fleet;
pub mod harness;
pub mod rcnet;
pub mod seed;
pub mod timeseries;

pub use error::{Error, Result};

/// Sampling interval of every trace, in seconds.
pub const STEP_SECONDS: f64 = 300.0;

/// Samples per day at the 5-minute cadence.
pub const SAMPLES_PER_DAY: usize = 288;
