//! Perception capabilities consumed by retrieval, grounding and exploration:
//! an open-vocabulary detector, a multimodal similarity embedder, a reasoner
//! and a region proposer. [`MockPerception`] answers from the simulator's
//! raster; [`RemotePerception`] forwards to an HTTP service.

mod mock;
mod remote;

pub use mock::{MockPerception, BLUR_FACTOR, DEFAULT_LAMBDA};
pub use remote::{RemoteConfig, RemotePerception, FAILURE_LIMIT};

use crate::affordance::AffordanceVector;
use crate::geometry::Region;
use crate::media::ImageRef;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::Arc;
use thiserror::Error;

/// Gap kept between any similarity and 1.
pub const SIMILARITY_EPSILON: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("perception backend unreachable: {0}")]
    Unreachable(String),
    #[error("perception circuit open after repeated failures")]
    CircuitOpen,
    #[error("reasoner could not answer: {0}")]
    Reasoner(String),
    #[error("cannot resolve media {0:?}")]
    Unresolvable(String),
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    #[serde(rename = "box")]
    pub bbox: Region,
    pub confidence: f64,
    /// 1 for the most confident detection of a response.
    pub rank: usize,
}

/// Sorts by confidence (descending, box then label breaking ties), keeps
/// the first `k` and assigns ranks `1..=k`.
pub fn rank_detections(mut dets: Vec<Detection>, k: usize) -> Vec<Detection> {
    dets.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| (a.bbox.x_min, a.bbox.y_min).cmp(&(b.bbox.x_min, b.bbox.y_min)))
            .then_with(|| a.label.cmp(&b.label))
    });
    dets.truncate(k);
    for (i, d) in dets.iter_mut().enumerate() {
        d.rank = i + 1;
    }
    dets
}

/// True when ranks are `1..=K` without gaps and confidence never increases.
pub fn is_well_ranked(dets: &[Detection]) -> bool {
    dets.iter().enumerate().all(|(i, d)| d.rank == i + 1)
        && dets.windows(2).all(|w| w[0].confidence >= w[1].confidence)
}

/// Similarity in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);

    /// Clamps into `[0, 1 - SIMILARITY_EPSILON]`; NaN maps to 0.
    pub fn new(value: f64) -> Self {
        if value.is_nan() {
            return Self::ZERO;
        }
        Self(value.clamp(0.0, 1.0 - SIMILARITY_EPSILON))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolHypothesis {
    pub label: String,
    pub attributes: Vec<String>,
}

/// Instruction-to-label lookup tables shipped with a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioTables {
    /// Instruction (or key phrase) to required tool label.
    #[serde(default)]
    pub tools: BTreeMap<String, String>,
    /// Instruction (or key phrase) to the container hiding the tool.
    #[serde(default)]
    pub containers: BTreeMap<String, String>,
}

fn normalize(text: &str) -> String {
    crate::catalog::tokens(text).join(" ")
}

fn lookup<'a>(table: &'a BTreeMap<String, String>, instruction: &str) -> Option<&'a str> {
    let norm = normalize(instruction);
    if norm.is_empty() {
        return None;
    }
    let padded = format!(" {norm} ");
    let mut best: Option<(usize, &str)> = None;
    for (key, value) in table {
        let k = normalize(key);
        if k.is_empty() {
            continue;
        }
        if k == norm {
            return Some(value);
        }
        if padded.contains(&format!(" {k} ")) && best.is_none_or(|(len, _)| k.len() > len) {
            best = Some((k.len(), value));
        }
    }
    best.map(|(_, v)| v)
}

impl ScenarioTables {
    /// Exact (normalized) instruction match first, then the longest key
    /// phrase contained in the instruction.
    pub fn tool_for(&self, instruction: &str) -> Option<&str> {
        lookup(&self.tools, instruction)
    }

    pub fn container_for(&self, instruction: &str) -> Option<&str> {
        lookup(&self.containers, instruction)
    }
}

/// One object as rendered into an observation. Boxes are in root-frame pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RasterObject {
    pub id: String,
    pub label: String,
    pub class: String,
    #[serde(rename = "box")]
    pub bbox: Region,
    /// World distance from the robot.
    pub distance: f64,
    pub blurred: bool,
    /// Operational then functional part: (name, box).
    pub parts: [(String, Region); 2],
}

/// Ground-truth content of an observation, read only by the mock backend.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub objects: Vec<RasterObject>,
    pub tables: ScenarioTables,
}

/// Where the robot sits in the image and the image scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Viewpoint {
    pub robot_px: (f64, f64),
    pub pixels_per_unit: f64,
}

/// An observation, or a crop of one. Regions handed to and returned from
/// perception calls are in this frame's own pixel coordinates.
#[derive(Debug, Clone)]
pub struct SceneFrame {
    pub image: ImageRef,
    pub width: u32,
    pub height: u32,
    pub timestamp_ms: u64,
    /// Offset of this frame inside the root observation; zero unless cropped.
    pub origin: (u32, u32),
    pub viewpoint: Option<Viewpoint>,
    pub raster: Option<Arc<Raster>>,
}

impl SceneFrame {
    pub fn new(image: ImageRef, width: u32, height: u32, timestamp_ms: u64) -> Self {
        assert!(width > 0 && height > 0, "frame must have positive size");
        Self {
            image,
            width,
            height,
            timestamp_ms,
            origin: (0, 0),
            viewpoint: None,
            raster: None,
        }
    }

    pub fn with_raster(mut self, raster: Raster) -> Self {
        self.raster = Some(Arc::new(raster));
        self
    }

    pub fn with_viewpoint(mut self, viewpoint: Viewpoint) -> Self {
        self.viewpoint = Some(viewpoint);
        self
    }

    pub fn bounds(&self) -> Region {
        Region::frame(self.width, self.height)
    }

    /// Extent of this frame in root-frame pixels.
    pub fn view(&self) -> Region {
        Region::frame(self.width, self.height).offset(self.origin.0, self.origin.1)
    }

    pub fn to_root(&self, r: &Region) -> Region {
        r.offset(self.origin.0, self.origin.1)
    }

    /// Sub-frame covering `region` (clipped to this frame). Degenerate crops
    /// are widened to one pixel so the sub-frame keeps a positive size.
    pub fn crop(&self, region: &Region) -> SceneFrame {
        let r = region.clip(self.width, self.height);
        let x0 = r.x_min.min(self.width - 1);
        let y0 = r.y_min.min(self.height - 1);
        let r = Region::new(x0, y0, r.x_max.max(x0 + 1), r.y_max.max(y0 + 1));
        SceneFrame {
            image: self.image.crop(&r),
            width: r.width(),
            height: r.height(),
            timestamp_ms: self.timestamp_ms,
            origin: (self.origin.0 + r.x_min, self.origin.1 + r.y_min),
            viewpoint: self.viewpoint.map(|v| Viewpoint {
                robot_px: (v.robot_px.0 - f64::from(r.x_min), v.robot_px.1 - f64::from(r.y_min)),
                ..v
            }),
            raster: self.raster.clone(),
        }
    }
}

/// Something a similarity or scoring call can compare.
#[derive(Debug, Clone, Copy)]
pub enum Media<'a> {
    Text(&'a str),
    Image(&'a ImageRef),
    /// A region of a frame, in that frame's coordinates.
    Crop { frame: &'a SceneFrame, region: Region },
}

impl Media<'_> {
    /// Stable textual key; equal keys denote the same media.
    pub fn key(&self) -> String {
        match self {
            Media::Text(t) => format!("text:{t}"),
            Media::Image(i) => format!("image:{i}"),
            Media::Crop { frame, region } => {
                format!("crop:{}@{}", frame.image, frame.to_root(region))
            }
        }
    }
}

/// The capability contract. Implementations must tolerate concurrent calls.
pub trait Perception: Send + Sync {
    /// Up to `k` ranked detections for the vocabulary terms.
    fn detect(
        &self,
        frame: &SceneFrame,
        vocabulary: &[String],
        k: usize,
    ) -> Result<Vec<Detection>, PerceptionError>;

    fn similarity(&self, a: &Media<'_>, b: &Media<'_>) -> Result<SimilarityScore, PerceptionError>;

    fn propose_tool(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<ToolHypothesis, PerceptionError>;

    /// Index into `candidates` of the instance that best fits the hypothesis.
    fn select_candidate(
        &self,
        hypothesis: &ToolHypothesis,
        candidates: &[Detection],
        frame: &SceneFrame,
    ) -> Result<usize, PerceptionError>;

    /// (operational, functional) regions inside `tool.bbox`.
    fn segment_regions(
        &self,
        tool: &Detection,
        frame: &SceneFrame,
    ) -> Result<(Region, Region), PerceptionError>;

    fn score_affordance(&self, subject: &Media<'_>) -> Result<AffordanceVector, PerceptionError>;

    /// Label of the container likely hiding the tool the instruction needs.
    fn infer_unseen_label(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<String, PerceptionError>;

    /// Persistent reference to the image content of `region`.
    fn snapshot(&self, frame: &SceneFrame, region: &Region) -> ImageRef {
        frame.image.crop(region)
    }
}

/// Splits a box into (lower, upper) halves; the fallback part segmentation.
pub fn fallback_regions(bbox: &Region) -> (Region, Region) {
    bbox.split_halves()
}
