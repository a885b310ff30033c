//! Incentive-based demand response with one aggregator and many household
//! participants.

pub mod config;
pub mod data;
pub mod domain;
pub mod dqn;
pub mod environment;
pub mod error;
pub mod scheduler;
pub mod trainer;

pub use error::{Error, ErrorClass, Result};
