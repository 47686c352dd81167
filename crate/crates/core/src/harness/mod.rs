//! Closed-loop experiment harness: latency conditions, the virtual-time
//! episode runner, the run matrix, metrics, and reports.

pub mod condition;
pub mod config;
pub mod episode;
pub mod latency;
pub mod matrix;
pub mod metrics;
pub mod report;

pub use condition::{ConditionParseError, LatencyCondition};
pub use config::{ChannelSettings, ConfigError, EpisodeConfig, ExperimentConfig, Perturbation, Rates, SimSettings};
pub use episode::{run_episode, scored_errors, write_trace, EpisodeResult, TraceRow};
pub use latency::{verify_latency, LatencyReport, LatencyStats};
pub use matrix::{run_matrix, run_matrix_with, MatrixOutput, RunRecord};
pub use metrics::{aggregate, compute_metrics, nearest_rank, AggregateRow, ErrorMetrics, MetricsError, RunSummary};
pub use report::{emit_report, read_runs, report_from_dir, ReportError};
