//! Federated skeleton-based action recognition simulator.

pub mod error;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};
pub mod dataset;
pub mod models;
pub mod evaluation;
pub mod experiment;
pub mod federation;
pub mod training;
