//! Closed-loop execution of one instruction in a simulated world.

use super::{HumanAnswer, MotionCommand, Planner, PlannerStatus, Stream, Validity};
use crate::config::ConfigParams;
use crate::geometry::Region;
use crate::perception::Perception;
use crate::simulator::{Pose, World};
use crate::space::{GroundingResult, RelationshipSpace};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Answers RequestHuman commands.
pub trait HumanResponder {
    /// `None` means nobody answered; the episode stays failed.
    fn answer(&mut self, prompt: &str, world: &World) -> Option<HumanAnswer>;
}

/// Nobody is around.
pub struct NoHuman;

impl HumanResponder for NoHuman {
    fn answer(&mut self, _prompt: &str, _world: &World) -> Option<HumanAnswer> {
        None
    }
}

/// Answers from the world's hint table, as a cooperative bystander would.
pub struct HintResponder;

impl HumanResponder for HintResponder {
    fn answer(&mut self, _prompt: &str, world: &World) -> Option<HumanAnswer> {
        world
            .human_hints
            .get(&world.task)
            .map(|label| HumanAnswer::Label(label.clone()))
    }
}

/// One tick of an episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEvent {
    /// World tick the observation was taken at.
    pub step: u64,
    pub stream: Stream,
    pub command: MotionCommand,
    pub regions: Vec<Region>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validity: Option<Validity>,
    pub latency_ms: f64,
    /// Robot pose when the command was decided.
    pub pose: Pose,
    /// Whether the command's region touches the required object (or its
    /// container while the object is hidden). `None` when there is nothing
    /// to check against.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_hit: Option<bool>,
    /// For invisible exploration: whether the region covers the required
    /// object's container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_hit: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub world_id: String,
    pub task: String,
    pub events: Vec<EpisodeEvent>,
    pub status: PlannerStatus,
    pub final_grounding: Option<GroundingResult>,
    pub msi_runs: usize,
    /// Human answers fed back into the planner.
    pub human_answers: usize,
}

impl EpisodeTrace {
    pub fn completed(&self) -> bool {
        self.status == PlannerStatus::Completed
    }

    pub fn ticks(&self) -> usize {
        self.events.len()
    }

    /// Line-delimited JSON, one event per line.
    pub fn to_jsonl(&self) -> String {
        self.events
            .iter()
            .map(|e| serde_json::to_string(e).expect("events serialize") + "\n")
            .collect()
    }

    /// Copy with timing zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> EpisodeTrace {
        let mut t = self.clone();
        for e in &mut t.events {
            e.latency_ms = 0.0;
        }
        t
    }

    /// Ticks from the start up to (excluding) the Manipulate command.
    pub fn valid_frames(&self) -> &[EpisodeEvent] {
        let end = self
            .events
            .iter()
            .position(|e| matches!(e.command, MotionCommand::Manipulate { .. }))
            .unwrap_or(self.events.len());
        &self.events[..end]
    }
}

fn target_hits(world: &World, command: &MotionCommand) -> (Option<bool>, Option<bool>) {
    let regions = command.regions();
    if regions.is_empty() {
        return (None, None);
    }
    let target_box = world.target().and_then(|t| world.projected_box(&t.id));
    let container_box = world
        .target_container()
        .and_then(|c| world.projected_box(&c.id));
    let reference = target_box.or(container_box);
    let target_hit = reference.map(|b| regions.iter().any(|r| r.intersects(&b)));
    let container_hit = match command {
        MotionCommand::Approach { region } | MotionCommand::Reformulate { key_region: region, .. }
            if target_box.is_none() =>
        {
            container_box.map(|c| region.contains(&c))
        }
        _ => None,
    };
    (target_hit, container_hit)
}

/// Observes, plans and acts until the planner completes or fails or
/// `max_steps` ticks pass. The space is cloned, so MSI insertions stay
/// local to the episode.
pub fn run_closed_loop(
    world: &mut World,
    space: &RelationshipSpace,
    params: &ConfigParams,
    perception: &dyn Perception,
    max_steps: usize,
    responder: &mut dyn HumanResponder,
) -> EpisodeTrace {
    let task = world.task.clone();
    let mut planner = Planner::new(&task, space.clone(), params.clone(), perception);
    let mut events = Vec::new();
    let mut human_answers = 0;
    for _ in 0..max_steps {
        let frame = world.observe();
        let started = Instant::now();
        let report = planner.step(&frame);
        let latency_ms = started.elapsed().as_secs_f64() * 1e3;
        let (target_hit, container_hit) = target_hits(world, &report.command);
        let step = world.tick;
        let pose = world.robot;
        let applied = world.apply(&report.command);
        let note = match (report.note, applied.warning) {
            (Some(a), Some(b)) => Some(format!("{a}; {b}")),
            (a, b) => a.or(b),
        };
        events.push(EpisodeEvent {
            step,
            stream: report.stream,
            regions: report.command.regions(),
            command: report.command.clone(),
            validity: report.validity,
            latency_ms,
            pose,
            target_hit,
            container_hit,
            note,
        });
        match &planner.state().status {
            PlannerStatus::Running => {}
            PlannerStatus::Completed => break,
            PlannerStatus::Failed(_) => {
                let MotionCommand::RequestHuman { prompt } = &report.command else {
                    break;
                };
                match responder.answer(prompt, world) {
                    Some(answer) => {
                        human_answers += 1;
                        planner.provide_human_answer(answer);
                        if planner.state().status != PlannerStatus::Running {
                            break;
                        }
                    }
                    None => break,
                }
            }
        }
    }
    let mut status = planner.state().status.clone();
    if status == PlannerStatus::Running {
        status = PlannerStatus::Failed(super::FailureReason::Timeout);
    }
    EpisodeTrace {
        world_id: world.id.clone(),
        task,
        events,
        status,
        final_grounding: planner.state().final_grounding.clone(),
        msi_runs: planner.state().msi_runs,
        human_answers,
    }
}
