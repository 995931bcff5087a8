//! Efficient retrieval scheme: affordance retrieval of a candidate pool, then
//! detect-and-match grounding of the tool and its parts in the current frame.

use crate::affordance::AffordanceVector;
use crate::config::ConfigParams;
use crate::geometry::Region;
use crate::media::ImageRef;
use crate::perception::{Detection, Media, Perception, SceneFrame, SimilarityScore};
use crate::space::{
    GroundingResult, InstructionRecord, RelationshipSpace, SpaceError, DEFAULT_FUNCTIONAL_PART,
    DEFAULT_OPERATIONAL_PART,
};
use std::sync::Arc;

/// Part matches weaker than this fall back to the segmenter.
pub const PART_MATCH_FLOOR: f64 = 0.5;

/// (part name, exemplar image) pairs.
pub type Exemplars = Vec<(String, ImageRef)>;

/// Records retrieved for an instruction, flattened for matching.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub anchor: InstructionRecord,
    /// Always contains the anchor.
    pub candidates: Vec<InstructionRecord>,
    /// (record id, tool image) for every result of every candidate.
    pub tool_images: Vec<(String, ImageRef)>,
    /// Distinct (container label, image) hints attached to candidate results.
    pub unseen_hints: Vec<(String, ImageRef)>,
}

impl CandidatePool {
    pub fn new(anchor: InstructionRecord, mut candidates: Vec<InstructionRecord>) -> Self {
        if !candidates.iter().any(|c| c.id == anchor.id) {
            candidates.insert(0, anchor.clone());
        }
        let mut tool_images = Vec::new();
        let mut unseen_hints: Vec<(String, ImageRef)> = Vec::new();
        for c in &candidates {
            for r in &c.results {
                tool_images.push((c.id.clone(), r.tool_image.clone()));
                if let Some((label, image)) = r.unseen_hint() {
                    if !unseen_hints.iter().any(|(l, i)| l == label && i == image) {
                        unseen_hints.push((label.to_string(), image.clone()));
                    }
                }
            }
        }
        Self {
            anchor,
            candidates,
            tool_images,
            unseen_hints,
        }
    }

    pub fn results(&self) -> impl Iterator<Item = &GroundingResult> {
        self.candidates.iter().flat_map(|c| c.results.iter())
    }

    /// Distinct tool labels in candidate order.
    pub fn tool_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for r in self.results() {
            if !labels.contains(&r.tool_label) {
                labels.push(r.tool_label.clone());
            }
        }
        labels
    }

    /// Distinct tool images with the label of the first result showing each.
    pub fn distinct_images(&self) -> Vec<(String, ImageRef)> {
        let mut out: Vec<(String, ImageRef)> = Vec::new();
        for r in self.results() {
            if !out.iter().any(|(_, i)| *i == r.tool_image) {
                out.push((r.tool_label.clone(), r.tool_image.clone()));
            }
        }
        out
    }

    /// Union of the part names of all results, or the default pair.
    pub fn part_vocabulary(&self) -> Vec<String> {
        let mut parts: Vec<String> = Vec::new();
        for r in self.results() {
            for p in [&r.operational_label, &r.functional_label].into_iter().flatten() {
                if !parts.contains(p) {
                    parts.push(p.clone());
                }
            }
        }
        if parts.is_empty() {
            parts = vec![
                DEFAULT_OPERATIONAL_PART.to_string(),
                DEFAULT_FUNCTIONAL_PART.to_string(),
            ];
        }
        parts
    }

    /// Distinct (part name, exemplar image) pairs for operational and
    /// functional parts.
    pub fn part_exemplars(&self) -> (Exemplars, Exemplars) {
        let mut op: Vec<(String, ImageRef)> = Vec::new();
        let mut func: Vec<(String, ImageRef)> = Vec::new();
        for r in self.results() {
            for (list, part) in [(&mut op, r.operational_part()), (&mut func, r.functional_part())] {
                let image = r.tool_image.part(part);
                if !list.iter().any(|(_, i)| *i == image) {
                    list.push((part.to_string(), image));
                }
            }
        }
        (op, func)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Retrieval {
    Pool(CandidatePool),
    /// Nothing within the retrieval radius: the task is new to the space.
    Novel { visited: usize },
}

/// DFS retrieval with radius `c`, then subcluster expansion with radius `d`.
pub fn retrieve_candidates(
    space: &RelationshipSpace,
    instruction_vector: &AffordanceVector,
    params: &ConfigParams,
) -> Result<Retrieval, SpaceError> {
    let outcome = space.dfs_retrieve(instruction_vector, params.retrieval_radius)?;
    let Some(anchor) = outcome.hit else {
        return Ok(Retrieval::Novel {
            visited: outcome.visited,
        });
    };
    let candidates = space
        .candidate_set(anchor, params.candidate_radius)?
        .into_iter()
        .cloned()
        .collect();
    Ok(Retrieval::Pool(CandidatePool::new(anchor.clone(), candidates)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum MatchOutcome {
    Grounded(GroundingResult),
    NeedsExploration {
        pool: Arc<CandidatePool>,
        s_max: SimilarityScore,
        t_new: SimilarityScore,
        /// The full ranked detection list of the matching pass.
        detections: Vec<Detection>,
    },
}

/// Per-detection matching scores behind a [`MatchOutcome`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchEvidence {
    pub detections: Vec<Detection>,
    /// Best similarity against the pool images for each of the first
    /// `candidate_rank_limit` detections.
    pub similarities: Vec<f64>,
    /// Pool image index achieving each entry of `similarities`.
    pub best_image: Vec<Option<usize>>,
    pub s_max: f64,
    pub t_new: f64,
}

impl MatchEvidence {
    /// Index of the detection with the highest similarity (lowest rank on ties).
    pub fn best_match(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &s) in self.similarities.iter().enumerate() {
            if best.is_none_or(|b| s > self.similarities[b]) {
                best = Some(i);
            }
        }
        best
    }
}

/// Padded crop of a detection, as compared against stored images.
pub fn crop_media<'a>(frame: &'a SceneFrame, bbox: &Region, params: &ConfigParams) -> Media<'a> {
    Media::Crop {
        frame,
        region: bbox.pad(params.crop_padding, frame.width, frame.height),
    }
}

/// Best similarity of a crop against a set of images; errors count as zero.
pub fn best_similarity(
    perception: &dyn Perception,
    crop: &Media<'_>,
    images: &[(String, ImageRef)],
) -> (f64, Option<usize>) {
    let mut best = (0.0, None);
    for (i, (_, image)) in images.iter().enumerate() {
        let s = perception
            .similarity(crop, &Media::Image(image))
            .map(SimilarityScore::value)
            .unwrap_or(0.0);
        if best.1.is_none() || s > best.0 {
            best = (s, Some(i));
        }
    }
    best
}

/// Scores the top detections against the pool images. Detection failures
/// are treated as an empty scene.
pub fn collect_evidence(
    frame: &SceneFrame,
    pool: &CandidatePool,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> (MatchEvidence, Vec<(String, ImageRef)>) {
    let images = pool.distinct_images();
    let detections = perception
        .detect(frame, &pool.tool_labels(), params.detection_budget())
        .unwrap_or_default();
    let limit = params.candidate_rank_limit().max(2 * params.top_n);
    let mut evidence = MatchEvidence {
        detections,
        ..MatchEvidence::default()
    };
    for det in evidence.detections.iter().take(limit) {
        let (s, i) = best_similarity(perception, &crop_media(frame, &det.bbox, params), &images);
        evidence.similarities.push(s);
        evidence.best_image.push(i);
    }
    let max_of = |n: usize| {
        evidence
            .similarities
            .iter()
            .take(n)
            .fold(0.0f64, |a, &b| a.max(b))
    };
    evidence.s_max = max_of(params.top_n);
    evidence.t_new = max_of(limit);
    (evidence, images)
}

/// Detect-and-match grounding of the pool's tool in `frame`.
pub fn match_tool(
    frame: &SceneFrame,
    pool: &Arc<CandidatePool>,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> MatchOutcome {
    match_tool_with_evidence(frame, pool, params, perception).0
}

pub fn match_tool_with_evidence(
    frame: &SceneFrame,
    pool: &Arc<CandidatePool>,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> (MatchOutcome, MatchEvidence) {
    let (evidence, images) = collect_evidence(frame, pool, params, perception);
    if evidence.s_max > params.match_threshold {
        // lowest rank among the top-N reaching S_max
        let idx = evidence
            .similarities
            .iter()
            .take(params.top_n)
            .position(|&s| s == evidence.s_max)
            .expect("s_max comes from the top-N");
        let tool = &evidence.detections[idx];
        let (label, image) = evidence.best_image[idx]
            .map(|i| images[i].clone())
            .expect("a positive similarity has an image");
        let parts = ground_regions(frame, tool, pool, params, perception);
        let result = GroundingResult {
            tool_label: label,
            tool_image: image,
            tool_region: tool.bbox,
            operational_region: parts.operational,
            functional_region: parts.functional,
            operational_label: Some(parts.operational_label),
            functional_label: Some(parts.functional_label),
            unseen_region_label: None,
            unseen_region_image: None,
        };
        return (MatchOutcome::Grounded(result), evidence);
    }
    let outcome = MatchOutcome::NeedsExploration {
        pool: Arc::clone(pool),
        s_max: SimilarityScore::new(evidence.s_max),
        t_new: SimilarityScore::new(evidence.t_new),
        detections: evidence.detections.clone(),
    };
    (outcome, evidence)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartRegions {
    pub operational: Region,
    pub functional: Region,
    pub operational_label: String,
    pub functional_label: String,
    /// True when the segmenter fallback produced the regions.
    pub fallback: bool,
}

/// Finds the operational and functional parts inside the tool box by part
/// detection plus exemplar matching, falling back to the segmenter. The
/// returned regions are in frame coordinates and inside `tool.bbox`.
pub fn ground_regions(
    frame: &SceneFrame,
    tool: &Detection,
    pool: &CandidatePool,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> PartRegions {
    let tool_box = tool.bbox.clip(frame.width, frame.height);
    let (op_ex, fn_ex) = pool.part_exemplars();
    let crop_box = tool_box.pad(params.crop_padding, frame.width, frame.height);
    let sub = frame.crop(&crop_box);
    let (dx, dy) = (sub.origin.0 - frame.origin.0, sub.origin.1 - frame.origin.1);
    let dets = perception
        .detect(&sub, &pool.part_vocabulary(), params.detection_budget())
        .unwrap_or_default();

    let pick = |exemplars: &[(String, ImageRef)]| -> Option<(Region, String, f64)> {
        let mut best: Option<(Region, String, f64)> = None;
        for det in &dets {
            let media = Media::Crop {
                frame: &sub,
                region: det.bbox,
            };
            let (s, i) = best_similarity(perception, &media, exemplars);
            if let (Some(i), Some(region)) = (i, det.bbox.offset(dx, dy).intersection(&tool_box)) {
                if best.as_ref().is_none_or(|b| s > b.2) {
                    best = Some((region, exemplars[i].0.clone(), s));
                }
            }
        }
        best.filter(|b| b.2 >= PART_MATCH_FLOOR)
    };

    if let (Some(op), Some(func)) = (pick(&op_ex), pick(&fn_ex)) {
        return PartRegions {
            operational: op.0,
            functional: func.0,
            operational_label: op.1,
            functional_label: func.1,
            fallback: false,
        };
    }
    let (operational, functional) = perception
        .segment_regions(&Detection { bbox: tool_box, ..tool.clone() }, frame)
        .ok()
        .filter(|(o, f)| tool_box.contains(o) && tool_box.contains(f))
        .unwrap_or_else(|| crate::perception::fallback_regions(&tool_box));
    let first = |ex: &[(String, ImageRef)], default: &str| {
        ex.first().map_or(default.to_string(), |e| e.0.clone())
    };
    PartRegions {
        operational,
        functional,
        operational_label: first(&op_ex, DEFAULT_OPERATIONAL_PART),
        functional_label: first(&fn_ex, DEFAULT_FUNCTIONAL_PART),
        fallback: true,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ErsOutcome {
    Novel,
    Matched(MatchOutcome),
}

/// Scores the instruction, retrieves a pool and matches it in the frame.
pub fn ers_pipeline(
    frame: &SceneFrame,
    instruction: &str,
    space: &RelationshipSpace,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> Result<ErsOutcome, ErsError> {
    let vector = perception.score_affordance(&Media::Text(instruction))?;
    match retrieve_candidates(space, &vector, params)? {
        Retrieval::Novel { .. } => Ok(ErsOutcome::Novel),
        Retrieval::Pool(pool) => Ok(ErsOutcome::Matched(match_tool(
            frame,
            &Arc::new(pool),
            params,
            perception,
        ))),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ErsError {
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Perception(#[from] crate::perception::PerceptionError),
}
