//! Decentralized robust state estimation for PMU-instrumented power grids.
//!
//! The crate is `no_std` with `alloc`. File formats, the CLI and parallel
//! Monte Carlo live in the `dpsse` companion crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod grid;
pub mod linalg;
pub mod measurement;
pub mod partition;
pub mod central;
pub mod admm;
pub mod baseline;

pub use error::{AdmmError, EstimationError, GridError, MeasurementError, PartitionError};
