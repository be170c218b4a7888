//! Minimum-width and robust simultaneous confidence bands built from
//! simulated sample paths.

pub mod band;
pub mod error;
pub mod experiments;
pub mod pathset;
pub mod simulators;
pub mod solver;
pub mod tuner;

pub use error::{Error, Result};
