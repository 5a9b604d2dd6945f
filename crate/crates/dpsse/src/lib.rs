//! File formats, Monte Carlo experiments and reporting around `dpsse-core`.

pub mod case_io;
pub mod experiments;
pub mod formats;
pub mod report;

pub use dpsse_core as core;
