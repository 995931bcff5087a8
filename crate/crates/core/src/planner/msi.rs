//! The slow stream: reasoner-driven grounding chain plus exploration, and
//! insertion of what it found into the relationship space.

use super::{
    Decision, FailureReason, HumanAnswer, Planner, PlannerStatus, Stream, TickReport,
};
use crate::catalog;
use crate::config::ConfigParams;
use crate::ers::{crop_media, CandidatePool};
use crate::exploration::{
    choose_strategy, invisible_explore, visible_explore, ExplorationOutcome, Strategy,
};
use crate::geometry::Region;
use crate::media::ImageRef;
use crate::perception::{Detection, Media, Perception, PerceptionError, SceneFrame, ToolHypothesis};
use crate::space::{GroundingResult, RecordDraft};

#[derive(Debug, Clone, PartialEq)]
pub enum MmCotResult {
    Grounded(GroundingResult),
    Explore(ExplorationOutcome),
    /// Neither grounding nor either exploration strategy produced anything.
    Unresolved(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmCotOutcome {
    pub hypothesis: ToolHypothesis,
    pub result: MmCotResult,
}

fn hypothesis_for(label: &str) -> ToolHypothesis {
    ToolHypothesis {
        label: label.to_string(),
        attributes: catalog::class_of(label)
            .and_then(catalog::class)
            .map(|c| c.attributes.iter().map(|a| a.to_string()).collect())
            .unwrap_or_default(),
    }
}

fn grounding_for(
    frame: &SceneFrame,
    hypothesis: &ToolHypothesis,
    tool: &Detection,
    perception: &dyn Perception,
) -> GroundingResult {
    let tool_box = tool.bbox.clip(frame.width, frame.height);
    let (operational, functional) = perception
        .segment_regions(&Detection { bbox: tool_box, ..tool.clone() }, frame)
        .ok()
        .filter(|(o, f)| tool_box.contains(o) && tool_box.contains(f))
        .unwrap_or_else(|| crate::perception::fallback_regions(&tool_box));
    let (op_name, fn_name) = catalog::parts_of(&hypothesis.label);
    GroundingResult {
        tool_label: hypothesis.label.clone(),
        tool_image: perception.snapshot(frame, &tool_box),
        tool_region: tool_box,
        operational_region: operational,
        functional_region: functional,
        operational_label: Some(op_name.to_string()),
        functional_label: Some(fn_name.to_string()),
        unseen_region_label: None,
        unseen_region_image: None,
    }
}

/// Propose, detect, select, verify, segment. A candidate must resemble the
/// pool's tool images or the proposed label by more than `m`; otherwise the
/// exploration policy decides where to look. A human answer replaces the
/// reasoner's proposal (label) or the whole detection stage (region).
pub fn mm_cot(
    frame: &SceneFrame,
    task: &str,
    pool: Option<&CandidatePool>,
    answer: Option<&HumanAnswer>,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> Result<MmCotOutcome, PerceptionError> {
    let hypothesis = match answer {
        Some(HumanAnswer::Label(label)) => hypothesis_for(label),
        Some(HumanAnswer::Region(region)) => {
            let hypothesis = perception
                .propose_tool(task, frame)
                .unwrap_or_else(|_| hypothesis_for("tool"));
            let tool = Detection {
                label: hypothesis.label.clone(),
                bbox: region.clip(frame.width, frame.height),
                confidence: 1.0,
                rank: 1,
            };
            let result = MmCotResult::Grounded(grounding_for(frame, &hypothesis, &tool, perception));
            return Ok(MmCotOutcome { hypothesis, result });
        }
        _ => perception.propose_tool(task, frame)?,
    };
    let label = hypothesis.label.clone();
    let dets = perception
        .detect(frame, std::slice::from_ref(&label), params.detection_budget())
        .unwrap_or_default();
    let images = pool.map(|p| p.distinct_images()).unwrap_or_default();
    let score = |d: &Detection| {
        let crop = crop_media(frame, &d.bbox, params);
        images
            .iter()
            .map(|(_, i)| Media::Image(i))
            .chain([Media::Text(&label)])
            .map(|r| perception.similarity(&crop, &r).map_or(0.0, |s| s.value()))
            .fold(0.0f64, f64::max)
    };

    let top = &dets[..dets.len().min(params.top_n)];
    if !top.is_empty() {
        let chosen = perception.select_candidate(&hypothesis, top, frame)?;
        if score(&top[chosen]) > params.match_threshold {
            let result = MmCotResult::Grounded(grounding_for(frame, &hypothesis, &top[chosen], perception));
            return Ok(MmCotOutcome { hypothesis, result });
        }
    }

    let limit = params.candidate_rank_limit().max(2 * params.top_n);
    let sims: Vec<f64> = dets.iter().take(limit).map(score).collect();
    let max_of = |n: usize| sims.iter().take(n).fold(0.0f64, |a, &b| a.max(b));
    let strategy = choose_strategy(max_of(params.top_n), max_of(limit), params);
    if strategy == Strategy::Visible {
        if let Ok(region) = visible_explore(&dets, frame, params) {
            let result = MmCotResult::Explore(ExplorationOutcome::Visible { region });
            return Ok(MmCotOutcome { hypothesis, result });
        }
    }
    let result = match invisible_explore(frame, task, pool, params, perception) {
        Ok((region, label)) => MmCotResult::Explore(ExplorationOutcome::Invisible { region, label }),
        Err(e) => MmCotResult::Unresolved(e.to_string()),
    };
    Ok(MmCotOutcome { hypothesis, result })
}

/// Record for a tool that was not visible: the container box stands in for
/// the tool region and carries the unseen hint.
fn unseen_result(
    frame: &SceneFrame,
    hypothesis: &ToolHypothesis,
    container: &Region,
    container_label: &str,
    perception: &dyn Perception,
) -> GroundingResult {
    let (lower, upper) = container.split_halves();
    let (op_name, fn_name) = catalog::parts_of(&hypothesis.label);
    GroundingResult {
        tool_label: hypothesis.label.clone(),
        tool_image: ImageRef::catalog(&hypothesis.label),
        tool_region: *container,
        operational_region: lower,
        functional_region: upper,
        operational_label: Some(op_name.to_string()),
        functional_label: Some(fn_name.to_string()),
        unseen_region_label: Some(container_label.to_string()),
        unseen_region_image: Some(perception.snapshot(frame, container)),
    }
}

impl Planner<'_> {
    fn insert(&mut self, result: GroundingResult, tool_media: Media<'_>) -> Result<(), String> {
        let p = self.perception;
        let instruction_affordance = p
            .score_affordance(&Media::Text(&self.task))
            .map_err(|e| e.to_string())?;
        let tool_affordance = p
            .score_affordance(&tool_media)
            .or_else(|_| p.score_affordance(&Media::Text(&result.tool_label)))
            .map_err(|e| e.to_string())?;
        let id = format!("msi-{:05}", self.space.record_count());
        self.space
            .insert_record(RecordDraft {
                id: Some(id),
                text: self.task.clone(),
                instruction_affordance,
                tool_affordance,
                results: vec![result],
            })
            .map(|_| ())
            .map_err(|e| e.to_string())
    }

    /// One MSI run. Learned results go into the space and the pool is
    /// dropped so the next ADM tick retrieves again.
    pub(super) fn run_msi(&mut self, frame: &SceneFrame) -> TickReport {
        self.state.stream = Stream::Msi;
        self.state.msi_latched = true;
        self.state.msi_runs += 1;
        let answer = self.state.pending_answer.take();
        let pool = self.state.pool.clone();
        let outcome = match mm_cot(frame, &self.task, pool.as_deref(), answer.as_ref(), &self.params, self.perception) {
            Ok(o) => o,
            Err(e) => {
                return self.fail(
                    Stream::Msi,
                    FailureReason::PlanningError(e.to_string()),
                    format!("Which tool should I use for {:?}?", self.task),
                )
            }
        };
        self.state.pool = None;
        let report = match outcome.result {
            MmCotResult::Grounded(g) => {
                let image = g.tool_image.clone();
                let note = self.insert(g.clone(), Media::Image(&image)).err();
                let near = self.near(frame, &g.tool_region);
                let command = super::decide_motion(Decision::Grounded(&g), near, &mut self.state, &self.params);
                TickReport {
                    grounding: Some(g),
                    note,
                    ..TickReport::new(Stream::Msi, command)
                }
            }
            MmCotResult::Explore(explored) => {
                let mut note = None;
                if let ExplorationOutcome::Invisible { region, label } = &explored {
                    self.state.last_container = Some(*region);
                    let r = unseen_result(frame, &outcome.hypothesis, region, label, self.perception);
                    note = self.insert(r, Media::Text(&outcome.hypothesis.label)).err();
                }
                let mut report = self.move_for(frame, explored, Stream::Msi);
                report.note = note;
                report
            }
            MmCotResult::Unresolved(reason) => self.exploration_failed(Stream::Msi, reason),
        };
        if matches!(self.state.status, PlannerStatus::Failed(_)) {
            self.state.pool = pool;
        }
        report
    }
}
