//! Dual-stream closed-loop planner. The fast stream (ADM) retrieves a
//! candidate pool once, then matches, checks validity and explores on every
//! frame. The slow stream (MSI) runs the reasoner-driven chain when the task
//! is novel or ADM stops seeing a valid tool, and grows the space with what
//! it learned.

mod episode;
mod msi;

pub use episode::{
    run_closed_loop, EpisodeEvent, EpisodeTrace, HintResponder, HumanResponder, NoHuman,
};
pub use msi::{mm_cot, MmCotOutcome, MmCotResult};

use crate::config::ConfigParams;
use crate::ers::{
    best_similarity, crop_media, match_tool_with_evidence, retrieve_candidates, CandidatePool,
    MatchEvidence, MatchOutcome, Retrieval,
};
use crate::exploration::{
    choose_strategy, invisible_explore, visible_explore, ExplorationOutcome, Strategy,
    CONTAINER_MATCH_FLOOR,
};
use crate::geometry::Region;
use crate::perception::{Detection, Media, Perception, SceneFrame};
use crate::space::{GroundingResult, RelationshipSpace};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Msi,
    Adm,
}

/// What the robot should do next. Regions are in the pixel coordinates of
/// the frame the command was decided on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MotionCommand {
    Approach {
        region: Region,
    },
    Reformulate {
        subgoal: String,
        key_region: Region,
    },
    Manipulate {
        operational: Region,
        functional: Region,
    },
    RequestHuman {
        prompt: String,
    },
    /// Emitted once the episode has ended.
    Idle,
}

impl MotionCommand {
    pub fn kind(&self) -> &'static str {
        match self {
            MotionCommand::Approach { .. } => "approach",
            MotionCommand::Reformulate { .. } => "reformulate",
            MotionCommand::Manipulate { .. } => "manipulate",
            MotionCommand::RequestHuman { .. } => "request_human",
            MotionCommand::Idle => "idle",
        }
    }

    pub fn regions(&self) -> Vec<Region> {
        match self {
            MotionCommand::Approach { region } => vec![*region],
            MotionCommand::Reformulate { key_region, .. } => vec![*key_region],
            MotionCommand::Manipulate {
                operational,
                functional,
            } => vec![*operational, *functional],
            MotionCommand::RequestHuman { .. } | MotionCommand::Idle => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum FailureReason {
    PlanningError(String),
    ReformulationLoop,
    ExplorationImpossible(String),
    Timeout,
    HumanAbort,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerStatus {
    Running,
    Completed,
    Failed(FailureReason),
}

/// A human's reply to [`MotionCommand::RequestHuman`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum HumanAnswer {
    /// Name of the tool to look for.
    Label(String),
    /// Where the tool is, in the current frame.
    Region(Region),
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub score: f64,
    pub valid: bool,
}

impl Validity {
    pub fn from_score(score: f64, params: &ConfigParams) -> Self {
        Self {
            score,
            // only a score strictly below the threshold is a failure
            valid: score >= params.validity_threshold,
        }
    }
}

/// A pushed "open the X" subgoal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subgoal {
    pub text: String,
    pub label: String,
    pub key_region: Region,
}

#[derive(Debug, Clone)]
pub struct PlannerState {
    pub stream: Stream,
    pub pool: Option<Arc<CandidatePool>>,
    /// Last retrieval found nothing within the retrieval radius.
    pub novel: bool,
    pub subgoal_stack: Vec<Subgoal>,
    /// Reformulations issued this episode.
    pub reformulations: usize,
    pub last_validity: Option<Validity>,
    pub episode_step: u64,
    pub status: PlannerStatus,
    /// Set by an MSI run, cleared when validity recovers: MSI runs once per
    /// failure event.
    pub msi_latched: bool,
    pub msi_runs: usize,
    pub pending_answer: Option<HumanAnswer>,
    pub last_container: Option<Region>,
    /// Grounding that accompanied the Manipulate command.
    pub final_grounding: Option<GroundingResult>,
}

impl Default for PlannerState {
    fn default() -> Self {
        Self {
            stream: Stream::Adm,
            pool: None,
            novel: false,
            subgoal_stack: Vec::new(),
            reformulations: 0,
            last_validity: None,
            episode_step: 0,
            status: PlannerStatus::Running,
            msi_latched: false,
            msi_runs: 0,
            pending_answer: None,
            last_container: None,
            final_grounding: None,
        }
    }
}

/// Everything one tick decided.
#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub stream: Stream,
    pub command: MotionCommand,
    pub validity: Option<Validity>,
    pub grounding: Option<GroundingResult>,
    pub exploration: ExplorationOutcome,
    pub note: Option<String>,
}

impl TickReport {
    fn new(stream: Stream, command: MotionCommand) -> Self {
        Self {
            stream,
            command,
            validity: None,
            grounding: None,
            exploration: ExplorationOutcome::None,
            note: None,
        }
    }
}

/// Confidence plus similarity of the top-2N detection that best matches the
/// pool; valid iff the sum reaches the validity threshold. `similarities[i]`
/// belongs to `detections[i]`.
pub fn validity_score(detections: &[Detection], similarities: &[f64], params: &ConfigParams) -> Validity {
    let mut best: Option<usize> = None;
    for (i, &s) in similarities.iter().enumerate().take(2 * params.top_n) {
        if i < detections.len() && best.is_none_or(|b| s > similarities[b]) {
            best = Some(i);
        }
    }
    let score = best.map_or(0.0, |i| detections[i].confidence + similarities[i]);
    Validity::from_score(score, params)
}

/// Standalone validity check computing its own similarities.
pub fn validity_check(
    frame: &SceneFrame,
    detections: &[Detection],
    pool: &CandidatePool,
    perception: &dyn Perception,
    params: &ConfigParams,
) -> Validity {
    let images = pool.distinct_images();
    let sims: Vec<f64> = detections
        .iter()
        .take(2 * params.top_n)
        .map(|d| best_similarity(perception, &crop_media(frame, &d.bbox, params), &images).0)
        .collect();
    validity_score(detections, &sims, params)
}

fn evidence_validity(evidence: &MatchEvidence, params: &ConfigParams) -> Validity {
    validity_score(&evidence.detections, &evidence.similarities, params)
}

/// The stream switch before the once-per-failure latch is applied.
pub fn msi_trigger(novel: bool, validity: Option<Validity>) -> bool {
    novel || validity.is_some_and(|v| !v.valid)
}

pub fn needs_msi(state: &PlannerState, novel: bool, validity: Option<Validity>) -> bool {
    state.pending_answer.is_some() || (msi_trigger(novel, validity) && !state.msi_latched)
}

/// What a tick settled on before turning it into motion.
#[derive(Debug, Clone, Copy)]
pub enum Decision<'a> {
    Grounded(&'a GroundingResult),
    Explore(&'a ExplorationOutcome),
}

/// Turns a grounding or exploration outcome into a command, updating the
/// subgoal stack and status.
pub fn decide_motion(
    decision: Decision<'_>,
    near: bool,
    state: &mut PlannerState,
    params: &ConfigParams,
) -> MotionCommand {
    match decision {
        Decision::Grounded(g) if near => {
            state.status = PlannerStatus::Completed;
            state.final_grounding = Some(g.clone());
            MotionCommand::Manipulate {
                operational: g.operational_region,
                functional: g.functional_region,
            }
        }
        Decision::Grounded(g) => MotionCommand::Approach {
            region: g.tool_region,
        },
        Decision::Explore(ExplorationOutcome::Visible { region }) => {
            MotionCommand::Approach { region: *region }
        }
        Decision::Explore(ExplorationOutcome::Invisible { region, .. }) if !near => {
            MotionCommand::Approach { region: *region }
        }
        Decision::Explore(ExplorationOutcome::Invisible { region, label }) => {
            state.reformulations += 1;
            if state.reformulations > params.max_subgoal_depth
                || state.subgoal_stack.len() >= params.max_subgoal_depth
            {
                state.status = PlannerStatus::Failed(FailureReason::ReformulationLoop);
                return MotionCommand::RequestHuman {
                    prompt: format!("I opened the {label} repeatedly without finding the tool"),
                };
            }
            let text = format!("open the {label}");
            state.subgoal_stack.push(Subgoal {
                text: text.clone(),
                label: label.clone(),
                key_region: *region,
            });
            MotionCommand::Reformulate {
                subgoal: text,
                key_region: *region,
            }
        }
        Decision::Explore(ExplorationOutcome::None) => MotionCommand::Idle,
    }
}

/// World distance from the robot to the center of `region`, if the frame
/// knows where the robot is.
pub fn world_distance(frame: &SceneFrame, region: &Region) -> Option<f64> {
    let vp = frame.viewpoint?;
    let (cx, cy) = region.center_f64();
    Some((cx - vp.robot_px.0).hypot(cy - vp.robot_px.1) / vp.pixels_per_unit)
}

/// One planner per episode.
pub struct Planner<'p> {
    task: String,
    space: RelationshipSpace,
    params: ConfigParams,
    perception: &'p dyn Perception,
    state: PlannerState,
}

impl<'p> Planner<'p> {
    pub fn new(
        task: &str,
        space: RelationshipSpace,
        params: ConfigParams,
        perception: &'p dyn Perception,
    ) -> Self {
        Self {
            task: task.to_string(),
            space,
            params,
            perception,
            state: PlannerState::default(),
        }
    }

    pub fn state(&self) -> &PlannerState {
        &self.state
    }

    pub fn space(&self) -> &RelationshipSpace {
        &self.space
    }

    pub fn task(&self) -> &str {
        &self.task
    }

    fn near(&self, frame: &SceneFrame, region: &Region) -> bool {
        world_distance(frame, region).is_some_and(|d| d <= self.params.near_radius)
    }

    fn fail(&mut self, stream: Stream, reason: FailureReason, prompt: String) -> TickReport {
        self.state.status = PlannerStatus::Failed(reason);
        TickReport::new(stream, MotionCommand::RequestHuman { prompt })
    }

    /// Feeds a human reply. Labels and regions resume the episode and force
    /// one MSI run seeded with the answer.
    pub fn provide_human_answer(&mut self, answer: HumanAnswer) {
        if answer == HumanAnswer::Abort {
            self.state.status = PlannerStatus::Failed(FailureReason::HumanAbort);
            return;
        }
        self.state.status = PlannerStatus::Running;
        self.state.reformulations = 0;
        self.state.subgoal_stack.clear();
        self.state.pending_answer = Some(answer);
    }

    /// A subgoal counts as grounded when its container is still found in the
    /// key region.
    fn subgoal_grounded(&self, frame: &SceneFrame, sub: &Subgoal) -> bool {
        let crop = frame.crop(&sub.key_region);
        let dets = self
            .perception
            .detect(&crop, std::slice::from_ref(&sub.label), self.params.top_n)
            .unwrap_or_default();
        dets.iter().any(|d| {
            self.perception
                .similarity(
                    &Media::Crop {
                        frame: &crop,
                        region: d.bbox,
                    },
                    &Media::Text(&sub.label),
                )
                .is_ok_and(|s| s.value() >= CONTAINER_MATCH_FLOOR)
        })
    }

    fn retrieve(&mut self) -> Result<(), String> {
        let vector = self
            .perception
            .score_affordance(&Media::Text(&self.task))
            .map_err(|e| e.to_string())?;
        match retrieve_candidates(&self.space, &vector, &self.params).map_err(|e| e.to_string())? {
            Retrieval::Pool(pool) => {
                self.state.pool = Some(Arc::new(pool));
                self.state.novel = false;
            }
            Retrieval::Novel { .. } => self.state.novel = true,
        }
        Ok(())
    }

    /// One full tick on the latest frame.
    pub fn step(&mut self, frame: &SceneFrame) -> TickReport {
        self.state.episode_step += 1;
        if self.state.status != PlannerStatus::Running {
            return TickReport::new(self.state.stream, MotionCommand::Idle);
        }
        let mut note = None;
        if let Some(sub) = self.state.subgoal_stack.pop() {
            let done = self.subgoal_grounded(frame, &sub);
            note = Some(format!(
                "subgoal {:?} {}",
                sub.text,
                if done { "grounded" } else { "not grounded" }
            ));
        }
        if self.state.pool.is_none() {
            if let Err(e) = self.retrieve() {
                return self.fail(
                    Stream::Adm,
                    FailureReason::PlanningError(e.clone()),
                    format!("I could not interpret {:?} ({e}); which tool do you mean?", self.task),
                );
            }
        }
        let (outcome, evidence) = match &self.state.pool {
            Some(pool) => {
                let (o, e) = match_tool_with_evidence(frame, pool, &self.params, self.perception);
                (Some(o), e)
            }
            None => (None, MatchEvidence::default()),
        };
        let validity = self
            .state
            .pool
            .as_ref()
            .map(|_| evidence_validity(&evidence, &self.params));
        self.state.last_validity = validity;
        if validity.is_some_and(|v| v.valid) {
            self.state.msi_latched = false;
        }
        if needs_msi(&self.state, self.state.novel, validity) {
            let mut report = self.run_msi(frame);
            report.validity = validity;
            report.note = note.or(report.note);
            return report;
        }
        self.state.stream = Stream::Adm;
        let mut report = match outcome {
            Some(MatchOutcome::Grounded(g)) => {
                let near = self.near(frame, &g.tool_region);
                let command = decide_motion(Decision::Grounded(&g), near, &mut self.state, &self.params);
                TickReport {
                    grounding: Some(g),
                    ..TickReport::new(Stream::Adm, command)
                }
            }
            Some(MatchOutcome::NeedsExploration { s_max, t_new, .. }) => {
                let strategy = choose_strategy(s_max.value(), t_new.value(), &self.params);
                self.explore_and_move(frame, strategy, &evidence.detections, Stream::Adm)
            }
            None => self.explore_and_move(frame, Strategy::Invisible, &[], Stream::Adm),
        };
        report.validity = validity;
        report.note = note.or(report.note);
        report
    }

    /// Runs the chosen exploration strategy. Visible exploration without
    /// low-ranked detections falls back to invisible exploration.
    fn explore(
        &mut self,
        frame: &SceneFrame,
        strategy: Strategy,
        detections: &[Detection],
    ) -> Result<ExplorationOutcome, String> {
        if strategy == Strategy::Visible {
            if let Ok(region) = visible_explore(detections, frame, &self.params) {
                return Ok(ExplorationOutcome::Visible { region });
            }
        }
        let pool = self.state.pool.as_deref();
        match invisible_explore(frame, &self.task, pool, &self.params, self.perception) {
            Ok((region, label)) => {
                self.state.last_container = Some(region);
                Ok(ExplorationOutcome::Invisible { region, label })
            }
            Err(e) => Err(e.to_string()),
        }
    }

    fn explore_and_move(
        &mut self,
        frame: &SceneFrame,
        strategy: Strategy,
        detections: &[Detection],
        stream: Stream,
    ) -> TickReport {
        match self.explore(frame, strategy, detections) {
            Ok(outcome) => self.move_for(frame, outcome, stream),
            Err(e) => self.exploration_failed(stream, e),
        }
    }

    fn move_for(&mut self, frame: &SceneFrame, outcome: ExplorationOutcome, stream: Stream) -> TickReport {
        let near = outcome.region().is_some_and(|r| self.near(frame, &r));
        let command = decide_motion(Decision::Explore(&outcome), near, &mut self.state, &self.params);
        TickReport {
            exploration: outcome,
            ..TickReport::new(stream, command)
        }
    }

    /// Heads for the last container seen, else gives up and asks for help.
    fn exploration_failed(&mut self, stream: Stream, reason: String) -> TickReport {
        match self.state.last_container {
            Some(region) => TickReport {
                note: Some(reason),
                ..TickReport::new(stream, MotionCommand::Approach { region })
            },
            None => self.fail(
                stream,
                FailureReason::ExplorationImpossible(reason),
                format!("I cannot find a tool for {:?}; where is it?", self.task),
            ),
        }
    }
}

#[cfg(test)]
mod tests;
