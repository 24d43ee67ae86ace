//! Simulation of distributed nonconvex optimization with compressed
//! communication, variance reduction and partial participation.

pub mod compressors;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod participation;
pub mod problems;
pub mod rng;
pub mod theory;
pub mod verification;

pub use error::{Error, Result};
