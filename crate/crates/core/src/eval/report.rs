//! Per-item and aggregate benchmark results, as JSON and as a text table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::bench::EvalMode;
use crate::model::Answer;
use crate::orchestrator::DegradedFlag;

/// Stage blamed for an item whose recall is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureStage {
    /// Classification, rephrasing or triple extraction failed.
    Qu,
    Linking,
    /// Queries ran but returned only wrong answers.
    Selection,
    /// Planning failed or the executed queries returned nothing.
    Execution,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub understanding_ms: f64,
    pub linking_ms: f64,
    pub planning_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dialogue_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub turn_index: Option<usize>,
    /// Text actually sent to the engine.
    pub asked: String,
    pub predicted: Vec<Answer>,
    pub gold: Vec<Answer>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub p_at_1: f64,
    pub mrr: f64,
    pub hit_at_5: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub degraded: Vec<DegradedFlag>,
    pub executed_queries: usize,
    pub candidate_queries: usize,
    pub llm_calls: usize,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub items: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub p_at_1: f64,
    pub mrr: f64,
    pub hit_at_5: f64,
    pub failed: usize,
    pub failures_by_stage: BTreeMap<FailureStage, usize>,
    pub mean_executed_queries: f64,
    pub max_executed_queries: usize,
    pub mean_timings: StageTimings,
}

impl Aggregate {
    /// Macro averages over `items`; all zero for an empty list.
    pub fn from_items(items: &[ItemReport]) -> Self {
        let n = items.len();
        if n == 0 {
            return Aggregate::default();
        }
        let mean = |f: fn(&ItemReport) -> f64| items.iter().map(f).sum::<f64>() / n as f64;
        let mut failures_by_stage = BTreeMap::new();
        for stage in items.iter().filter_map(|i| i.failure) {
            *failures_by_stage.entry(stage).or_insert(0) += 1;
        }
        Aggregate {
            items: n,
            precision: mean(|i| i.precision),
            recall: mean(|i| i.recall),
            f1: mean(|i| i.f1),
            p_at_1: mean(|i| i.p_at_1),
            mrr: mean(|i| i.mrr),
            hit_at_5: mean(|i| i.hit_at_5),
            failed: items.iter().filter(|i| i.failure.is_some()).count(),
            failures_by_stage,
            mean_executed_queries: mean(|i| i.executed_queries as f64),
            max_executed_queries: items.iter().map(|i| i.executed_queries).max().unwrap_or(0),
            mean_timings: StageTimings {
                understanding_ms: mean(|i| i.timings.understanding_ms),
                linking_ms: mean(|i| i.timings.linking_ms),
                planning_ms: mean(|i| i.timings.planning_ms),
                total_ms: mean(|i| i.timings.total_ms),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mode: EvalMode,
    pub items: Vec<ItemReport>,
    pub aggregate: Aggregate,
}

impl MetricReport {
    pub fn new(mode: EvalMode, items: Vec<ItemReport>) -> Self {
        let aggregate = Aggregate::from_items(&items);
        MetricReport { mode, items, aggregate }
    }

    /// Aligned plain-text rendering: one row per item, then the aggregate.
    pub fn to_table(&self) -> String {
        let id_width = self.items.iter().map(|i| i.id.len()).max().unwrap_or(2).max(9);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<id_width$}  {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>5}  {:<9}",
            "id", "P", "R", "F1", "P@1", "MRR", "Hit@5", "#Q", "failure"
        );
        let row = |out: &mut String, id: &str, v: [f64; 6], q: String, failure: &str| {
            let _ = writeln!(
                out,
                "{:<id_width$}  {:>6.4} {:>6.4} {:>6.4} {:>6.4} {:>6.4} {:>6.4} {:>5}  {:<9}",
                id, v[0], v[1], v[2], v[3], v[4], v[5], q, failure
            );
        };
        for i in &self.items {
            let failure = i.failure.map(|f| format!("{f:?}").to_lowercase()).unwrap_or_default();
            row(
                &mut out,
                &i.id,
                [i.precision, i.recall, i.f1, i.p_at_1, i.mrr, i.hit_at_5],
                i.executed_queries.to_string(),
                &failure,
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(out, "{}", "-".repeat(id_width + 58));
        row(
            &mut out,
            "aggregate",
            [a.precision, a.recall, a.f1, a.p_at_1, a.mrr, a.hit_at_5],
            format!("{:.1}", a.mean_executed_queries),
            &format!("{}/{}", a.failed, a.items),
        );
        let t = &a.mean_timings;
        let _ = writeln!(
            out,
            "mean ms: understanding {:.1}, linking {:.1}, planning {:.1}, total {:.1}",
            t.understanding_ms, t.linking_ms, t.planning_ms, t.total_ms
        );
        out
    }
}
