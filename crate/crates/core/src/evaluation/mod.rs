//! Metrics, baselines and benchmark reports.

pub mod benchmark;
pub mod impute;
pub mod metrics;
pub mod report;

pub use benchmark::{run_benchmark, BenchmarkConfig, BenchmarkOutcome};
pub use metrics::{copy_previous, mape, mase, welch_t_test, MaseNormalizer, MaseScale, WelchTest};
pub use report::{build_report, EvalReport, Method, MethodScores};
