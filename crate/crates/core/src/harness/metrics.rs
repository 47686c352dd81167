//! Cross-track error statistics, per-run summaries and per-condition
//! aggregation.

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::vehicle::EventKind;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("scoring window contains no samples")]
    EmptyWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mae: f64,
    pub rms: f64,
    pub p95: f64,
    pub max_abs_e: f64,
}

/// Nearest-rank percentile of an ascending slice: the value at rank
/// ceil(p/100 * n), ranks starting at 1.
pub fn nearest_rank<T: Copy>(sorted: &[T], p: f64) -> Option<T> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

/// MAE, RMS, nearest-rank P95 and max of |e| over already-windowed errors.
pub fn compute_metrics(errors: &[f64]) -> Result<ErrorMetrics, MetricsError> {
    if errors.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    let n = errors.len() as f64;
    let mut abs: Vec<f64> = errors.iter().map(|e| e.abs()).collect();
    let mae = abs.iter().sum::<f64>() / n;
    let rms = (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    abs.sort_by(f64::total_cmp);
    Ok(ErrorMetrics {
        mae,
        rms,
        p95: nearest_rank(&abs, 95.0).expect("non-empty"),
        max_abs_e: *abs.last().expect("non-empty"),
    })
}

/// One row of `runs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub condition: String,
    pub route: String,
    pub rep: u32,
    pub seed: u64,
    pub outcome: EventKind,
    pub completed: bool,
    pub aborted_departure: bool,
    pub lane_invasions: u32,
    pub mae: f64,
    pub rms: f64,
    pub p95: f64,
    pub max_abs_e: f64,
    pub tau_v_median_ms: Option<f64>,
    pub tau_v_p95_ms: Option<f64>,
    pub tau_c_median_ms: Option<f64>,
    pub duration_s: f64,
}

fn na_or_value<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => s.serialize_f64(*x),
        None => s.serialize_str("NA"),
    }
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    #[serde(rename = "cond")]
    pub condition: String,
    #[serde(rename = "comp_pct")]
    pub completion_pct: f64,
    #[serde(rename = "coll")]
    pub mean_departures: f64,
    #[serde(rename = "laneinv")]
    pub mean_lane_invasions: f64,
    /// Mean per-run P95 over completed runs; `None` (written `NA`) when no
    /// run completed.
    #[serde(rename = "p95_x", serialize_with = "na_or_value")]
    pub p95_over_completed: Option<f64>,
    #[serde(skip)]
    pub runs: usize,
}

/// Aggregate runs per condition, keeping the order in which conditions
/// first appear.
pub fn aggregate(runs: &[RunSummary]) -> Vec<AggregateRow> {
    let mut order: Vec<&str> = Vec::new();
    for r in runs {
        if !order.contains(&r.condition.as_str()) {
            order.push(&r.condition);
        }
    }
    order
        .into_iter()
        .map(|cond| {
            let group: Vec<&RunSummary> = runs.iter().filter(|r| r.condition == cond).collect();
            let n = group.len() as f64;
            let completed: Vec<f64> = group.iter().filter(|r| r.completed).map(|r| r.p95).collect();
            AggregateRow {
                condition: cond.to_string(),
                completion_pct: 100.0 * completed.len() as f64 / n,
                mean_departures: group.iter().filter(|r| r.aborted_departure).count() as f64 / n,
                mean_lane_invasions: group.iter().map(|r| r.lane_invasions as f64).sum::<f64>() / n,
                p95_over_completed: (!completed.is_empty())
                    .then(|| completed.iter().sum::<f64>() / completed.len() as f64),
                runs: group.len(),
            }
        })
        .collect()
}
