//! Exploration policy: decides between visible and invisible exploration and
//! computes the region worth approaching.

use crate::config::ConfigParams;
use crate::ers::CandidatePool;
use crate::geometry::Region;
use crate::media::ImageRef;
use crate::perception::{Detection, Media, Perception, PerceptionError, SceneFrame};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A container crop must be at least this similar to its label or hint image
/// to count as found.
pub const CONTAINER_MATCH_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    None,
    Visible,
    Invisible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExplorationOutcome {
    None,
    Visible { region: Region },
    Invisible { region: Region, label: String },
}

impl ExplorationOutcome {
    pub fn kind(&self) -> Strategy {
        match self {
            ExplorationOutcome::None => Strategy::None,
            ExplorationOutcome::Visible { .. } => Strategy::Visible,
            ExplorationOutcome::Invisible { .. } => Strategy::Invisible,
        }
    }

    pub fn region(&self) -> Option<Region> {
        match self {
            ExplorationOutcome::None => None,
            ExplorationOutcome::Visible { region } | ExplorationOutcome::Invisible { region, .. } => {
                Some(*region)
            }
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ExplorationOutcome::Invisible { label, .. } => Some(label),
            _ => None,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplorationError {
    #[error("exploration impossible: {0}")]
    Impossible(String),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
}

/// Skip when the match already succeeded; otherwise visible exploration iff
/// `t_new` strictly exceeds the strategy threshold.
pub fn choose_strategy(s_max: f64, t_new: f64, params: &ConfigParams) -> Strategy {
    if s_max > params.match_threshold {
        Strategy::None
    } else if t_new > params.strategy_threshold {
        Strategy::Visible
    } else {
        Strategy::Invisible
    }
}

/// Weight of a detection inside a square: `N' - rank` for ranks in
/// `N+1..=N'`, nothing otherwise.
pub fn detection_weight(rank: usize, params: &ConfigParams) -> Option<usize> {
    (rank > params.top_n && rank <= params.rank_cutoff).then(|| params.rank_cutoff - rank)
}

/// Region explored when the tool is probably among the low-ranked
/// detections. Every candidate ranked `N+1..=candidate_rank_limit` centers a
/// square of half-side PX; detections ranked `N+1..=N'` touching the square
/// add their weight to it. The heaviest square (lowest candidate rank, then
/// smallest `x_min`, on ties) is returned together with all its contributors'
/// boxes, clipped to the frame.
pub fn visible_explore(
    detections: &[Detection],
    frame: &SceneFrame,
    params: &ConfigParams,
) -> Result<Region, ExplorationError> {
    let (w, h) = (frame.width, frame.height);
    let limit = params.candidate_rank_limit();
    let mut best: Option<(usize, usize, u32, Region, Vec<Region>)> = None;
    for cand in detections
        .iter()
        .filter(|d| d.rank > params.top_n && d.rank <= limit)
    {
        let (cx, cy) = cand.bbox.center();
        let square = Region::square_around(cx, cy, params.square_half_side, w, h);
        let mut weight = 0;
        let mut boxes = Vec::new();
        for d in detections {
            if let Some(wt) = detection_weight(d.rank, params) {
                if d.bbox.intersects(&square) {
                    weight += wt;
                    boxes.push(d.bbox);
                }
            }
        }
        let better = best.as_ref().is_none_or(|(bw, br, bx, _, _)| {
            weight > *bw
                || (weight == *bw && (cand.rank, cand.bbox.x_min) < (*br, *bx))
        });
        if better {
            best = Some((weight, cand.rank, cand.bbox.x_min, square, boxes));
        }
    }
    let (_, _, _, square, boxes) = best.ok_or_else(|| {
        ExplorationError::Impossible(format!(
            "no detections ranked {}..={limit}",
            params.top_n + 1
        ))
    })?;
    Ok(boxes
        .iter()
        .fold(square, |acc, b| acc.union(b))
        .clip(w, h))
}

/// Picks the container label for an instruction: the pool hint label most
/// similar to the instruction text, else the reasoner's guess.
pub fn unseen_label(
    frame: &SceneFrame,
    instruction: &str,
    pool: Option<&CandidatePool>,
    perception: &dyn Perception,
) -> Result<String, ExplorationError> {
    let hints = pool.map(|p| p.unseen_hints.as_slice()).unwrap_or_default();
    if hints.is_empty() {
        return Ok(perception.infer_unseen_label(instruction, frame)?);
    }
    let mut best: Option<(f64, &str)> = None;
    for (label, _) in hints {
        let s = perception
            .similarity(&Media::Text(instruction), &Media::Text(label))
            .map(|s| s.value())
            .unwrap_or(0.0);
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, label));
        }
    }
    Ok(best.expect("hints are non-empty").1.to_string())
}

/// Locates the container likely hiding the tool. Returns its box in frame
/// coordinates and its label.
pub fn invisible_explore(
    frame: &SceneFrame,
    instruction: &str,
    pool: Option<&CandidatePool>,
    params: &ConfigParams,
    perception: &dyn Perception,
) -> Result<(Region, String), ExplorationError> {
    let label = unseen_label(frame, instruction, pool, perception)?;
    let dets = perception
        .detect(frame, std::slice::from_ref(&label), params.top_n)
        .unwrap_or_default();
    if dets.is_empty() {
        return Err(ExplorationError::Impossible(format!("no {label} in view")));
    }
    let hint_images: Vec<&ImageRef> = pool
        .into_iter()
        .flat_map(|p| p.unseen_hints.iter())
        .filter(|(l, _)| *l == label)
        .map(|(_, i)| i)
        .collect();
    let crop = |d: &Detection| Media::Crop {
        frame,
        region: d.bbox.pad(params.crop_padding, frame.width, frame.height),
    };
    let score = |d: &Detection, reference: &Media<'_>| {
        perception
            .similarity(&crop(d), reference)
            .map(|s| s.value())
            .unwrap_or(0.0)
    };
    let (chosen, s) = if hint_images.is_empty() {
        let hypothesis = crate::perception::ToolHypothesis {
            label: label.clone(),
            attributes: Vec::new(),
        };
        let i = perception.select_candidate(&hypothesis, &dets, frame)?;
        (i, score(&dets[i], &Media::Text(&label)))
    } else {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, d) in dets.iter().enumerate() {
            let s = hint_images
                .iter()
                .map(|img| score(d, &Media::Image(img)))
                .fold(0.0f64, f64::max);
            if s > best.1 {
                best = (i, s);
            }
        }
        best
    };
    if s < CONTAINER_MATCH_FLOOR {
        return Err(ExplorationError::Impossible(format!(
            "no detection resembles a {label}"
        )));
    }
    Ok((dets[chosen].bbox, label))
}

#[cfg(test)]
mod tests;
