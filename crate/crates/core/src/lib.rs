//! Analog-feedback FDD channel training: ML subspace and channel-gain
//! estimation, Cramér-Rao bounds, and a seeded Monte Carlo harness.

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod error;
pub mod gain;
pub mod harness;
pub mod linalg;
pub mod subspace;

pub use error::{Error, Result};
