//! Episodic linear-quadratic control with optimistic exploration, exact or
//! under joint differential privacy via tree-based Gram counters.

pub mod agent;
pub mod confidence;
pub mod counters;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod lq_system;
pub mod riccati;

pub use error::{Error, Result};
