//! Benchmark harness for closed-loop compressed-image super-resolution.
//!
//! The `cssr` binary is a thin shell over this library; the acceptance and
//! integration tests drive the same entry points.

pub mod bench;
pub mod config;
pub mod diff;
pub mod exit;
pub mod probe;
pub mod reference;

pub use bench::{run_benchmark, run_single, BenchReport, ResultRow, CSV_HEADER};
pub use config::{RunConfig, Settings, SrSpec};
pub use exit::{CliResult, ExitKind, Failure};
