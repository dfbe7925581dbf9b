//! Quantum control landscape analysis.

pub mod analysis;
pub mod benchmarks;
pub mod error;
pub mod flows;
pub mod homotopy;
pub mod linalg;
pub mod objectives;
pub mod quantum;
pub mod rng;
pub mod topology;
pub mod tracking;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
