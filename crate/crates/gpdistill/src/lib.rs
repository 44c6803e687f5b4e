//! Benchmark harness for GP kernel distillation: dataset ingestion,
//! metrics, synthetic generators, and the scripted experiments behind the
//! `gpdistill` CLI.

// Index loops in the numeric kernels mirror the matrix subscripts.
#![allow(clippy::needless_range_loop)]

pub mod config;
pub mod csvio;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod report;
pub mod synth;
pub mod timing;

pub use config::{DataConfig, ExperimentKind, MethodName, RunConfig};
pub use error::{HarnessError, Result};
pub use experiments::{run_benchmark, run_reconstruction, run_sweep_b, run_toy1d};
pub use metrics::{rmse, smse, variance_rmse};
pub use report::Report;
