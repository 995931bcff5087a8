//! Batch evaluation over scenario worlds, retrieval ablations, error
//! analysis and the interactive console responder.

mod ablation;
mod errors;
mod interactive;

pub use ablation::{
    class_index,
    ablate_retrieval, text_cosine, AblationQuery, AblationRow, AblationTable, RetrievalMethod,
};
pub use errors::{detection_tick, run_error_analysis, ErrorCase, ErrorReport};
pub use interactive::{interactive_episode, parse_answer, ConsoleResponder};

use crate::config::ConfigParams;
use crate::perception::MockPerception;
use crate::planner::{run_closed_loop, EpisodeTrace, HintResponder, HumanResponder, NoHuman};
use crate::seeded;
use crate::simulator::{check_success, Category, SuccessFlags, World};
use crate::space::RelationshipSpace;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

pub const REPORT_SCHEMA: &str = "aide-report/1";

/// Scoring note carried in every report header.
pub const SCORING_NOTE: &str =
    "success is automatic: a grounded box or part counts when its IoU with the ground truth is at least 0.5";

/// A scenario slot: a loaded world or the reason it could not be loaded.
#[derive(Debug, Clone)]
pub enum ScenarioEntry {
    World(Box<World>),
    Skipped { name: String, reason: String },
}

/// Every `*.json` file in `dir`, sorted by name; unreadable or invalid files
/// become skipped entries instead of aborting the batch.
pub fn load_scenarios(dir: &Path) -> std::io::Result<Vec<ScenarioEntry>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|p| match World::load(&p) {
            Ok(w) => ScenarioEntry::World(Box::new(w)),
            Err(e) => ScenarioEntry::Skipped {
                name: p.display().to_string(),
                reason: e.to_string(),
            },
        })
        .collect())
}

pub fn entries(worlds: Vec<World>) -> Vec<ScenarioEntry> {
    worlds.into_iter().map(|w| ScenarioEntry::World(Box::new(w))).collect()
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub params: ConfigParams,
    /// Mock perception noise level.
    pub noise: f64,
    pub seed: u64,
    /// Episodes per world, each with its own perception seed.
    pub repeats: usize,
    pub workers: usize,
    pub max_steps: usize,
    /// Answer RequestHuman from the worlds' hint tables.
    pub use_hints: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            params: ConfigParams::default(),
            noise: 0.0,
            seed: 0,
            repeats: 1,
            workers: 1,
            max_steps: 200,
            use_hints: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRow {
    pub world_id: String,
    pub category: Option<Category>,
    pub tags: Vec<String>,
    pub task: String,
    pub repeat: usize,
    pub perception_seed: u64,
    pub status: String,
    pub ticks: usize,
    pub msi_runs: usize,
    pub flags: Option<SuccessFlags>,
    /// Valid frames whose command region hit the target, and valid frames
    /// that had a target to hit.
    pub esr_hits: usize,
    pub esr_frames: usize,
    pub wall_ms: f64,
    pub skipped: Option<String>,
}

impl EpisodeRow {
    pub fn whole(&self) -> bool {
        self.flags.is_some_and(|f| f.whole)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema: String,
    pub scoring: String,
    pub noise: f64,
    pub seed: u64,
    pub episodes: usize,
    pub skipped: usize,
    pub tsr: f64,
    pub osr: f64,
    pub fsr: f64,
    pub wsr: f64,
    /// Over episodes whose tool starts hidden; `None` when there are none.
    pub asr: Option<f64>,
    /// Mean per-episode ticks per wall-clock second.
    pub fps: f64,
    pub esr: Option<f64>,
    pub rows: Vec<EpisodeRow>,
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Fraction of valid frames whose command region hit the target.
pub fn esr_counts(trace: &EpisodeTrace) -> (usize, usize) {
    let frames: Vec<_> = trace
        .valid_frames()
        .iter()
        .filter_map(|e| e.target_hit)
        .collect();
    (frames.iter().filter(|h| **h).count(), frames.len())
}

/// Runs one episode with a seeded mock backend.
pub fn run_episode(
    world: &World,
    space: &RelationshipSpace,
    opts: &EvalOptions,
    repeat: usize,
    responder: &mut dyn HumanResponder,
) -> (EpisodeTrace, EpisodeRow) {
    let perception_seed = seeded::key(opts.seed, &[&world.id, &repeat.to_string()]);
    let perception = MockPerception::new(perception_seed, opts.noise, opts.params.dims);
    let mut w = world.clone();
    let started = Instant::now();
    let trace = run_closed_loop(&mut w, space, &opts.params, &perception, opts.max_steps, responder);
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let flags = check_success(&trace, &w);
    let (esr_hits, esr_frames) = esr_counts(&trace);
    let row = EpisodeRow {
        world_id: world.id.clone(),
        category: Some(world.category),
        tags: world.tags.clone(),
        task: world.task.clone(),
        repeat,
        perception_seed,
        status: format!("{:?}", trace.status),
        ticks: trace.ticks(),
        msi_runs: trace.msi_runs,
        flags: Some(flags),
        esr_hits,
        esr_frames,
        wall_ms,
        skipped: None,
    };
    (trace, row)
}

/// Evaluation result plus the traces behind it, in row order.
pub struct EvalOutput {
    pub report: EvalReport,
    pub traces: Vec<EpisodeTrace>,
}

/// Runs every (world, repeat) episode on `opts.workers` threads and
/// aggregates the metric suite.
pub fn run_eval(space: &RelationshipSpace, scenarios: &[ScenarioEntry], opts: &EvalOptions) -> EvalOutput {
    let jobs: Vec<(&World, usize)> = scenarios
        .iter()
        .filter_map(|s| match s {
            ScenarioEntry::World(w) => Some(w.as_ref()),
            ScenarioEntry::Skipped { .. } => None,
        })
        .flat_map(|w| (0..opts.repeats.max(1)).map(move |r| (w, r)))
        .collect();
    let run = |(w, r): &(&World, usize)| {
        if opts.use_hints {
            run_episode(w, space, opts, *r, &mut HintResponder)
        } else {
            run_episode(w, space, opts, *r, &mut NoHuman)
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .expect("thread pool");
    let results: Vec<(EpisodeTrace, EpisodeRow)> = pool.install(|| jobs.par_iter().map(run).collect());
    let (traces, mut rows): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    for s in scenarios {
        if let ScenarioEntry::Skipped { name, reason } = s {
            rows.push(EpisodeRow {
                world_id: name.clone(),
                category: None,
                tags: Vec::new(),
                task: String::new(),
                repeat: 0,
                perception_seed: 0,
                status: "skipped".into(),
                ticks: 0,
                msi_runs: 0,
                flags: None,
                esr_hits: 0,
                esr_frames: 0,
                wall_ms: 0.0,
                skipped: Some(reason.clone()),
            });
        }
    }
    EvalOutput {
        report: aggregate(rows, opts),
        traces,
    }
}

pub fn aggregate(rows: Vec<EpisodeRow>, opts: &EvalOptions) -> EvalReport {
    let run: Vec<&EpisodeRow> = rows.iter().filter(|r| r.skipped.is_none()).collect();
    let n = run.len();
    let count = |f: &dyn Fn(&SuccessFlags) -> bool| {
        run.iter().filter(|r| r.flags.as_ref().is_some_and(f)).count()
    };
    let hidden: Vec<&&EpisodeRow> = run
        .iter()
        .filter(|r| r.flags.is_some_and(|f| f.exploration.is_some()))
        .collect();
    let asr_hits = hidden
        .iter()
        .filter(|r| r.flags.is_some_and(|f| f.whole && f.exploration == Some(true)))
        .count();
    let (esr_hits, esr_frames) = run
        .iter()
        .fold((0, 0), |(h, f), r| (h + r.esr_hits, f + r.esr_frames));
    let fps_samples: Vec<f64> = run
        .iter()
        .filter(|r| r.wall_ms > 0.0)
        .map(|r| r.ticks as f64 / (r.wall_ms / 1e3))
        .collect();
    EvalReport {
        schema: REPORT_SCHEMA.to_string(),
        scoring: SCORING_NOTE.to_string(),
        noise: opts.noise,
        seed: opts.seed,
        episodes: n,
        skipped: rows.len() - n,
        tsr: percent(count(&|f| f.tool), n),
        osr: percent(count(&|f| f.operational), n),
        fsr: percent(count(&|f| f.functional), n),
        wsr: percent(count(&|f| f.whole), n),
        asr: (!hidden.is_empty()).then(|| percent(asr_hits, hidden.len())),
        fps: if fps_samples.is_empty() {
            0.0
        } else {
            fps_samples.iter().sum::<f64>() / fps_samples.len() as f64
        },
        esr: (esr_frames > 0).then(|| percent(esr_hits, esr_frames)),
        rows,
    }
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.1}"));
        let mut out = format!(
            "# {}\n# noise={} seed={} episodes={} skipped={}\n",
            self.scoring, self.noise, self.seed, self.episodes, self.skipped
        );
        out += "| TSR | OSR | FSR | WSR | ASR | FPS | ESR |\n|---|---|---|---|---|---|---|\n";
        out += &format!(
            "| {:.1} | {:.1} | {:.1} | {:.1} | {} | {:.1} | {} |\n",
            self.tsr,
            self.osr,
            self.fsr,
            self.wsr,
            opt(self.asr),
            self.fps,
            opt(self.esr)
        );
        out += "\n| world | repeat | status | ticks | msi | whole |\n|---|---|---|---|---|---|\n";
        for r in &self.rows {
            out += &format!(
                "| {} | {} | {} | {} | {} | {} |\n",
                r.world_id,
                r.repeat,
                r.skipped.as_deref().map_or(r.status.clone(), |s| format!("skipped: {s}")),
                r.ticks,
                r.msi_runs,
                r.whole()
            );
        }
        out
    }
}

/// Writes `<stem>.json`, `<stem>.md` and one JSONL event log per episode
/// under `<stem>.episodes/`.
pub fn write_report(path: &Path, output: &EvalOutput) -> std::io::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path.with_extension("json"), output.report.to_json())?;
    std::fs::write(path.with_extension("md"), output.report.to_table())?;
    let logs = path.with_extension("episodes");
    std::fs::create_dir_all(&logs)?;
    for (trace, row) in output.traces.iter().zip(&output.report.rows) {
        std::fs::write(
            logs.join(format!("{}-{}.jsonl", row.world_id, row.repeat)),
            trace.to_jsonl(),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
