//! Benchmark replay and scoring.

mod bench;
mod metrics;
mod report;

pub use bench::{load_bench, run_benchmark, BenchLoadError, BenchmarkItem, EvalMode};
pub use metrics::{normalize, retention, score_ranked, score_set, AnswerKey, RankedScores, SetScores};
pub use report::{Aggregate, FailureStage, ItemReport, MetricReport, StageTimings};
