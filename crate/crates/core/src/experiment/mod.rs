//! Experiment driver: configurations, the simulation chain, power sweeps
//! with a result cache, and report files.

pub mod config;
pub mod pipeline;
pub mod report;
pub mod sweep;

use std::path::PathBuf;

pub use config::{CprKind, CprSettings, ExperimentConfig, Modulation, WdmConfig};
pub use pipeline::{run_point, PointOutcome, ResultRecord};
pub use report::{emit_report, peak_se, read_results, write_results, Peak};
pub use sweep::{run_sweep, SweepOptions, SweepOutput};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "FIBERNL_CACHE_DIR";

/// Cache directory from the environment, if set and non-empty.
pub fn cache_dir() -> Option<PathBuf> {
    std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from)
}
