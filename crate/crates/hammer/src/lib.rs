//! The fdb-hammer benchmark: field streams, worker processes, contention
//! patterns, global-timing bandwidth and reports.

pub mod aggregate;
pub mod error;
pub mod ids;
pub mod orchestrate;
pub mod payload;
pub mod record;
pub mod report;
pub mod spec;
pub mod worker;

pub use error::{HammerError, Result};
