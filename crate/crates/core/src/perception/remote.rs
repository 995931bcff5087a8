//! HTTP client for an external perception service.
//!
//! Three JSON endpoints: `POST /detect`, `POST /similarity` and `POST /reason`
//! (the latter multiplexes reasoner, segmenter and scorer tasks through a
//! `task` field). After [`FAILURE_LIMIT`] consecutive transport failures the
//! circuit opens and calls fail fast until the cool-down elapses.

use super::{
    is_well_ranked, Detection, Media, Perception, PerceptionError, SceneFrame, SimilarityScore,
    ToolHypothesis,
};
use crate::affordance::AffordanceVector;
use crate::geometry::Region;
use crate::media::ImageRef;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

pub const FAILURE_LIMIT: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Environment variable holding a bearer token, if the service wants one.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_ms: u64,
    #[serde(default = "default_cooldown")]
    pub cooldown_ms: u64,
}

fn default_timeout() -> u64 {
    100
}

fn default_cooldown() -> u64 {
    5_000
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key_env: None,
            timeout_ms: default_timeout(),
            cooldown_ms: default_cooldown(),
        }
    }
}

pub struct RemotePerception {
    config: RemoteConfig,
    agent: ureq::Agent,
    api_key: Option<String>,
    failures: AtomicUsize,
    opened_at: Mutex<Option<Instant>>,
}

#[derive(Serialize)]
struct FrameJson<'a> {
    image: &'a ImageRef,
    width: u32,
    height: u32,
    timestamp_ms: u64,
    origin: (u32, u32),
}

fn frame_json(frame: &SceneFrame) -> FrameJson<'_> {
    FrameJson {
        image: &frame.image,
        width: frame.width,
        height: frame.height,
        timestamp_ms: frame.timestamp_ms,
        origin: frame.origin,
    }
}

fn media_json(m: &Media<'_>) -> Value {
    match m {
        Media::Text(t) => json!({ "kind": "text", "text": t }),
        Media::Image(i) => json!({ "kind": "image", "image": i }),
        Media::Crop { frame, region } => json!({
            "kind": "crop",
            "frame": frame_json(frame),
            "region": region,
        }),
    }
}

#[derive(Deserialize)]
struct DetectResponse {
    detections: Vec<Detection>,
}

#[derive(Deserialize)]
struct SimilarityResponse {
    value: f64,
}

#[derive(Deserialize)]
struct LabelResponse {
    label: String,
    #[serde(default)]
    attributes: Vec<String>,
}

#[derive(Deserialize)]
struct IndexResponse {
    index: usize,
}

#[derive(Deserialize)]
struct RegionsResponse {
    operational: Region,
    functional: Region,
}

#[derive(Deserialize)]
struct ScoresResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct ImageResponse {
    image: ImageRef,
}

impl RemotePerception {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let api_key = config
            .api_key_env
            .as_deref()
            .and_then(|v| std::env::var(v).ok());
        Self {
            config,
            agent,
            api_key,
            failures: AtomicUsize::new(0),
            opened_at: Mutex::new(None),
        }
    }

    pub fn is_open(&self) -> bool {
        self.failures.load(Ordering::SeqCst) >= FAILURE_LIMIT
    }

    /// Closes the circuit and forgets past failures.
    pub fn reset(&self) {
        self.failures.store(0, Ordering::SeqCst);
        *self.opened_at.lock().expect("circuit lock") = None;
    }

    fn gate(&self) -> Result<(), PerceptionError> {
        if !self.is_open() {
            return Ok(());
        }
        let opened = self.opened_at.lock().expect("circuit lock");
        match *opened {
            // half-open: let one probe through once the cool-down is over
            Some(t) if t.elapsed() >= Duration::from_millis(self.config.cooldown_ms) => Ok(()),
            _ => Err(PerceptionError::CircuitOpen),
        }
    }

    fn record_failure(&self) {
        let n = self.failures.fetch_add(1, Ordering::SeqCst) + 1;
        if n >= FAILURE_LIMIT {
            *self.opened_at.lock().expect("circuit lock") = Some(Instant::now());
        }
    }

    fn post<T: DeserializeOwned>(&self, path: &str, body: Value) -> Result<T, PerceptionError> {
        self.gate()?;
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body) {
            Ok(resp) => {
                self.reset();
                resp.into_json::<T>()
                    .map_err(|e| PerceptionError::Protocol(e.to_string()))
            }
            Err(ureq::Error::Status(422, resp)) => {
                // the service understood the request but could not answer it
                self.reset();
                let text = resp.into_string().unwrap_or_default();
                Err(PerceptionError::Reasoner(text))
            }
            Err(e) => {
                self.record_failure();
                Err(PerceptionError::Unreachable(e.to_string()))
            }
        }
    }
}

impl Perception for RemotePerception {
    fn detect(
        &self,
        frame: &SceneFrame,
        vocabulary: &[String],
        k: usize,
    ) -> Result<Vec<Detection>, PerceptionError> {
        if k == 0 {
            return Err(PerceptionError::InvalidRequest("k must be at least 1".into()));
        }
        let resp: DetectResponse = self.post(
            "detect",
            json!({ "frame": frame_json(frame), "vocabulary": vocabulary, "k": k }),
        )?;
        let mut dets = resp.detections;
        dets.truncate(k);
        if !is_well_ranked(&dets) {
            return Err(PerceptionError::Protocol("detections are not ranked".into()));
        }
        Ok(dets)
    }

    fn similarity(&self, a: &Media<'_>, b: &Media<'_>) -> Result<SimilarityScore, PerceptionError> {
        let resp: SimilarityResponse =
            self.post("similarity", json!({ "a": media_json(a), "b": media_json(b) }))?;
        Ok(SimilarityScore::new(resp.value))
    }

    fn propose_tool(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<ToolHypothesis, PerceptionError> {
        let resp: LabelResponse = self.post(
            "reason",
            json!({ "task": "propose_tool", "instruction": instruction, "frame": frame_json(frame) }),
        )?;
        if resp.label.is_empty() {
            return Err(PerceptionError::Protocol("empty tool label".into()));
        }
        Ok(ToolHypothesis {
            label: resp.label,
            attributes: resp.attributes,
        })
    }

    fn select_candidate(
        &self,
        hypothesis: &ToolHypothesis,
        candidates: &[Detection],
        frame: &SceneFrame,
    ) -> Result<usize, PerceptionError> {
        if candidates.is_empty() {
            return Err(PerceptionError::InvalidRequest("no candidates".into()));
        }
        let resp: IndexResponse = self.post(
            "reason",
            json!({
                "task": "select_candidate",
                "hypothesis": hypothesis,
                "candidates": candidates,
                "frame": frame_json(frame),
            }),
        )?;
        if resp.index >= candidates.len() {
            return Err(PerceptionError::Protocol(format!(
                "candidate index {} out of range",
                resp.index
            )));
        }
        Ok(resp.index)
    }

    fn segment_regions(
        &self,
        tool: &Detection,
        frame: &SceneFrame,
    ) -> Result<(Region, Region), PerceptionError> {
        let resp: RegionsResponse = self.post(
            "reason",
            json!({ "task": "segment_regions", "tool": tool, "frame": frame_json(frame) }),
        )?;
        if tool.bbox.contains(&resp.operational) && tool.bbox.contains(&resp.functional) {
            Ok((resp.operational, resp.functional))
        } else {
            Ok(super::fallback_regions(&tool.bbox))
        }
    }

    fn score_affordance(&self, subject: &Media<'_>) -> Result<AffordanceVector, PerceptionError> {
        let resp: ScoresResponse = self.post(
            "reason",
            json!({ "task": "score_affordance", "subject": media_json(subject) }),
        )?;
        AffordanceVector::new(resp.scores).map_err(|e| PerceptionError::Protocol(e.to_string()))
    }

    fn infer_unseen_label(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<String, PerceptionError> {
        let resp: LabelResponse = self.post(
            "reason",
            json!({ "task": "infer_unseen_label", "instruction": instruction, "frame": frame_json(frame) }),
        )?;
        Ok(resp.label)
    }

    fn snapshot(&self, frame: &SceneFrame, region: &Region) -> ImageRef {
        self.post::<ImageResponse>(
            "reason",
            json!({ "task": "snapshot", "frame": frame_json(frame), "region": region }),
        )
        .map(|r| r.image)
        .unwrap_or_else(|_| frame.image.crop(region))
    }
}
