//! Simulation harness for tactile contour following: scenario configs, the
//! deterministic closed-loop runner, comparison reports, extraction
//! benchmarks, plotting, and file formats. The `tacservo` binary exposes
//! all of it on the command line.

pub mod bench;
pub mod checks;
pub mod pgm;
pub mod plots;
pub mod runner;
pub mod scenario;

pub use runner::{compare_runs, run_scenario, RunLog, RunMetrics};
pub use scenario::{demo, Scenario};
