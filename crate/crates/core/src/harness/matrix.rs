//! The condition x route x repetition matrix.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::condition::LatencyCondition;
use super::config::{ConfigError, EpisodeConfig, ExperimentConfig};
use super::episode::{run_episode, TraceRow};
use super::metrics::{aggregate, AggregateRow, RunSummary};
use crate::netchan::LatencySample;
use crate::vehicle::EpisodeEvent;
use crate::world::RouteId;

/// One run's summary plus what the report needs from its trace.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub summary: RunSummary,
    pub route: RouteId,
    pub outcome: EpisodeEvent,
    /// World-frame positions, one per physics tick.
    pub path: Vec<[f64; 2]>,
    pub latency: Vec<LatencySample>,
    pub video_deliveries: Vec<u64>,
    /// Full trace, kept only when the experiment asks for trace files.
    pub trace: Option<Vec<TraceRow>>,
}

#[derive(Debug, Clone)]
pub struct MatrixOutput {
    pub runs: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub conditions: Vec<LatencyCondition>,
}

impl MatrixOutput {
    pub fn summaries(&self) -> Vec<RunSummary> {
        self.runs.iter().map(|r| r.summary.clone()).collect()
    }

    /// The run drawn thick in trajectory overlays: L0 (or the first
    /// condition), repetition 5 (or the last one), of `route`.
    pub fn reference_run(&self, route: RouteId) -> Option<&RunRecord> {
        let cond = self
            .conditions
            .iter()
            .find(|c| c.name == "L0")
            .or(self.conditions.first())?;
        let max_rep = self.runs.iter().map(|r| r.summary.rep).max()?;
        let rep = max_rep.min(5);
        self.runs
            .iter()
            .find(|r| r.route == route && r.summary.condition == cond.name && r.summary.rep == rep)
    }
}

struct Job {
    condition: LatencyCondition,
    route: RouteId,
    rep: u32,
    seed: u64,
}

/// Every condition sees the same seeds: the seed index counts routes and
/// repetitions, not conditions, so conditions are compared on paired runs.
fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let mut out = Vec::new();
    for cond in &cfg.conditions {
        for (ri, &route) in cfg.routes.iter().enumerate() {
            for rep in 0..cfg.reps {
                let index = ri as u64 * cfg.reps as u64 + rep as u64;
                out.push(Job {
                    condition: cond.clone(),
                    route,
                    rep: rep + 1,
                    seed: cfg.base_seed.wrapping_add(index),
                });
            }
        }
    }
    out
}

pub fn run_matrix(cfg: &ExperimentConfig) -> Result<MatrixOutput, ConfigError> {
    run_matrix_with(cfg, 1, |_, _, _| {})
}

/// Run the matrix on up to `threads` worker threads. Results are ordered
/// by job, not by completion, so output does not depend on scheduling.
/// `progress(done, total, summary)` is called as runs finish.
pub fn run_matrix_with<F>(cfg: &ExperimentConfig, threads: usize, progress: F) -> Result<MatrixOutput, ConfigError>
where
    F: Fn(usize, usize, &RunSummary) + Sync,
{
    cfg.validate()?;
    let jobs = jobs(cfg);
    let total = jobs.len();
    let slots: Vec<Mutex<Option<RunRecord>>> = (0..total).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let done = AtomicUsize::new(0);

    let worker = || {
        loop {
            let i = next.fetch_add(1, Ordering::Relaxed);
            let Some(job) = jobs.get(i) else { break };
            let ep = EpisodeConfig {
                route: job.route,
                condition: job.condition.clone(),
                seed: job.seed,
                sim: cfg.sim.clone(),
            };
            let result = run_episode(&ep).expect("validated above");
            let mut summary = result.summary;
            summary.rep = job.rep;
            let n = done.fetch_add(1, Ordering::Relaxed) + 1;
            progress(n, total, &summary);
            *slots[i].lock().expect("slot poisoned") = Some(RunRecord {
                summary,
                route: job.route,
                outcome: result.outcome,
                path: result.trace.iter().map(|r| [r.x, r.y]).collect(),
                latency: result.latency,
                video_deliveries: result.video_deliveries,
                trace: cfg.write_traces.then_some(result.trace),
            });
        }
    };

    let threads = threads.clamp(1, total.max(1));
    if threads == 1 {
        worker();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(worker);
            }
        });
    }

    let runs: Vec<RunRecord> = slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot poisoned").expect("every job ran"))
        .collect();
    let summaries: Vec<RunSummary> = runs.iter().map(|r| r.summary.clone()).collect();
    Ok(MatrixOutput {
        aggregates: aggregate(&summaries),
        runs,
        conditions: cfg.conditions.clone(),
    })
}
