//! Error detection and recovery over worlds with injected failures.

use super::{run_episode, EvalOptions};
use crate::planner::{EpisodeTrace, HintResponder};
use crate::simulator::{World, WorldEvent};
use crate::space::RelationshipSpace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorCase {
    /// The tool was taken away at `removed_at`; `detected_at` is the first
    /// tick at or after it whose validity check failed.
    Removal {
        world_id: String,
        removed_at: u64,
        detected_at: Option<u64>,
        detected: bool,
    },
    /// The reasoner had no answer; recovery goes through the human hint.
    ReasonerMiss {
        world_id: String,
        human_answers: usize,
        status: String,
        recovered: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Percentage of removals caught within one tick; `None` without removals.
    pub edr: Option<f64>,
    /// Percentage of reasoner misses that ended in whole success.
    pub err: Option<f64>,
    pub cases: Vec<ErrorCase>,
}

impl ErrorReport {
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        let mut out = format!("| EDR | ERR |\n|---|---|\n| {} | {} |\n\n", opt(self.edr), opt(self.err));
        for c in &self.cases {
            out += &match c {
                ErrorCase::Removal { world_id, removed_at, detected_at, detected } => format!(
                    "removal {world_id}: removed at {removed_at}, detected at {detected_at:?} -> {detected}\n"
                ),
                ErrorCase::ReasonerMiss { world_id, human_answers, status, recovered } => format!(
                    "miss {world_id}: {human_answers} answers, {status} -> {recovered}\n"
                ),
            };
        }
        out
    }
}

fn removal_tick(world: &World) -> Option<u64> {
    world
        .events
        .iter()
        .map(|WorldEvent::Remove { tick, .. }| *tick)
        .min()
}

/// First tick at or after `removed_at` with a failed validity check.
pub fn detection_tick(trace: &EpisodeTrace, removed_at: u64) -> Option<u64> {
    trace
        .events
        .iter()
        .filter(|e| e.step >= removed_at)
        .find(|e| e.validity.is_some_and(|v| !v.valid))
        .map(|e| e.step)
}

fn percent(cases: &[&ErrorCase], ok: impl Fn(&ErrorCase) -> bool) -> Option<f64> {
    (!cases.is_empty())
        .then(|| 100.0 * cases.iter().filter(|c| ok(c)).count() as f64 / cases.len() as f64)
}

/// Removal worlds feed EDR, reasoner-miss worlds feed ERR. Every episode
/// answers RequestHuman from the world's hint table, so a world without
/// hints cannot recover.
pub fn run_error_analysis(
    space: &RelationshipSpace,
    removal: &[World],
    misses: &[World],
    opts: &EvalOptions,
) -> ErrorReport {
    let jobs: Vec<(&World, usize)> = removal
        .iter()
        .chain(misses)
        .flat_map(|w| (0..opts.repeats.max(1)).map(move |r| (w, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .expect("thread pool");
    let removal_ids: Vec<&str> = removal.iter().map(|w| w.id.as_str()).collect();
    let cases: Vec<ErrorCase> = pool.install(|| {
        jobs.par_iter()
            .map(|(w, r)| {
                let (trace, row) = run_episode(w, space, opts, *r, &mut HintResponder);
                match removal_tick(w).filter(|_| removal_ids.contains(&w.id.as_str())) {
                    Some(removed_at) => {
                        let detected_at = detection_tick(&trace, removed_at);
                        ErrorCase::Removal {
                            world_id: w.id.clone(),
                            removed_at,
                            detected_at,
                            detected: detected_at.is_some_and(|t| t <= removed_at + 1),
                        }
                    }
                    None => ErrorCase::ReasonerMiss {
                        world_id: w.id.clone(),
                        human_answers: trace.human_answers,
                        status: row.status.clone(),
                        recovered: trace.completed() && row.whole(),
                    },
                }
            })
            .collect()
    });
    let removals: Vec<&ErrorCase> = cases.iter().filter(|c| matches!(c, ErrorCase::Removal { .. })).collect();
    let missed: Vec<&ErrorCase> = cases.iter().filter(|c| matches!(c, ErrorCase::ReasonerMiss { .. })).collect();
    ErrorReport {
        edr: percent(&removals, |c| matches!(c, ErrorCase::Removal { detected: true, .. })),
        err: percent(&missed, |c| matches!(c, ErrorCase::ReasonerMiss { recovered: true, .. })),
        cases,
    }
}
