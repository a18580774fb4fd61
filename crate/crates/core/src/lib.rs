//! Risk-based active learning for maintenance decision support.
//!
//! A Bayesian Gaussian mixture classifier is grown online from a stream of
//! structural-health observations. Labels are bought through inspections
//! only when their expected value of perfect information exceeds the
//! inspection cost, and an optional semi-supervised EM step lets the
//! unlabeled stream correct the sampling bias this querying introduces.
//!
//! Modules, bottom up:
//! - [`dataset`]: synthetic deterioration-cycle data, splits and CSV I/O
//! - [`classifier`]: conjugate Gaussian mixture, MAP fitting and MAP-EM
//! - [`decision`]: the maintenance decision process and EVPI
//! - [`active_learner`]: the online query-and-retrain loop
//! - [`harness`]: repeated paired experiments, aggregation and reports

pub mod active_learner;
pub mod classifier;
pub mod dataset;
pub mod decision;
mod error;
pub mod gaussian;
pub mod harness;
pub mod metrics;

pub use error::{Error, Result};
