//! Bounding walks of coalescing navigation forests in random environments:
//! exact simulators, limit-law samplers, a brute-force forest oracle and the
//! statistics used to compare them.

pub mod config;
pub mod env;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod limit;
pub mod oracle;
pub mod rng;
pub mod semilattice;
pub mod stats;

pub use error::{Error, Result};
