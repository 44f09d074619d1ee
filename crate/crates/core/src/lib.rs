//! Joint greedy sensor selection for heterogeneous sensor networks.
//!
//! Sensors are split into disjoint sets that share a noise level, and a
//! selector keeps a fixed number of sensors from each set so that the
//! parameter estimate from the kept measurements is as accurate as possible.

pub mod bounds;
pub mod checks;
pub mod costs;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod instance;
pub mod model;
pub mod par;
pub mod report;
pub mod rng;
pub mod selectors;

pub use error::{Error, Result};
