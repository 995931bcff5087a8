//! Deterministic backend answering from the simulator's raster.
//!
//! Every noisy quantity is drawn from a hash of (seed, query identity), so
//! identical queries get identical answers regardless of call order or
//! thread interleaving. `sigma` scales all noise; zero gives exact answers.

use super::{
    rank_detections, Detection, Media, Perception, PerceptionError, RasterObject, SceneFrame,
    SimilarityScore, ToolHypothesis, SIMILARITY_EPSILON,
};
use crate::affordance::AffordanceVector;
use crate::catalog;
use crate::geometry::{iou, Region};
use crate::media::ImageRef;
use crate::seeded::{gauss, key};

/// Distance scale of the detection confidence falloff, in world units.
pub const DEFAULT_LAMBDA: f64 = 5.0;
/// Confidence multiplier for blurred objects.
pub const BLUR_FACTOR: f64 = 0.4;

const EXACT_BASE: f64 = 1.0;
const CLASS_BASE: f64 = 0.6;
const OTHER_BASE: f64 = 0.03;
const OTHER_PART_BASE: f64 = 0.3;
const CONFIDENCE_NOISE: f64 = 0.1;

const SIMILARITY_BASE: f64 = 0.95;
const CLASS_PENALTY: f64 = 0.5;
const LABEL_PENALTY: f64 = 0.06;
const PART_PENALTY: f64 = 0.5;
const BLUR_PENALTY: f64 = 0.05;
const SIMILARITY_NOISE: f64 = 0.02;

const NEUTRAL_SCORE: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct MockPerception {
    seed: u64,
    sigma: f64,
    dims: usize,
    lambda: f64,
}

/// What a piece of media depicts, as far as the mock can tell.
#[derive(Debug, Clone, Default, PartialEq)]
struct Concept {
    empty: bool,
    label: Option<String>,
    class: Option<String>,
    part: Option<String>,
    blurred: bool,
    /// Container usually holding the tools an instruction calls for.
    related: Option<String>,
}

impl Concept {
    fn of_label(label: &str) -> Self {
        Concept {
            label: Some(label.to_string()),
            class: catalog::class_of(label).map(str::to_string),
            ..Concept::default()
        }
    }

    fn of_object(obj: &RasterObject, part: Option<&str>) -> Self {
        Concept {
            label: Some(obj.label.clone()),
            class: Some(obj.class.clone()),
            part: part.map(str::to_string),
            blurred: obj.blurred,
            ..Concept::default()
        }
    }
}

fn concept_similarity(a: &Concept, b: &Concept) -> f64 {
    if a.empty || b.empty {
        return 0.0;
    }
    let related = (a.related.is_some() && a.related == b.label)
        || (b.related.is_some() && b.related == a.label);
    let mut v = SIMILARITY_BASE;
    if related {
        v -= LABEL_PENALTY;
    } else if let (Some(x), Some(y)) = (&a.class, &b.class) {
        if x != y {
            v -= CLASS_PENALTY;
        } else if matches!((&a.label, &b.label), (Some(p), Some(q)) if p != q) {
            v -= LABEL_PENALTY;
        }
    }
    if a.part != b.part {
        v -= PART_PENALTY;
    }
    v -= BLUR_PENALTY * (u8::from(a.blurred) + u8::from(b.blurred)) as f64;
    v.max(0.0)
}

fn split_part(id: &str) -> (&str, Option<&str>) {
    match id.rsplit_once('#') {
        Some((base, part)) if catalog::is_part_label(part) => (base, Some(part)),
        _ => (id, None),
    }
}

/// Best-overlapping raster object (or object part) for a root-frame region.
fn object_under<'r>(
    objects: &'r [RasterObject],
    region: &Region,
) -> Option<(&'r RasterObject, Option<&'r str>)> {
    let mut best: Option<(f64, &RasterObject, Option<&str>)> = None;
    for obj in objects {
        let mut consider = |score: f64, part: Option<&'r str>| {
            if score > 0.0 && best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, obj, part));
            }
        };
        consider(iou(&obj.bbox, region), None);
        for (name, pbox) in &obj.parts {
            consider(iou(pbox, region), Some(name.as_str()));
        }
    }
    best.map(|(_, o, p)| (o, p))
}

impl MockPerception {
    pub fn new(seed: u64, sigma: f64, dims: usize) -> Self {
        Self {
            seed,
            sigma: sigma.max(0.0),
            dims,
            lambda: DEFAULT_LAMBDA,
        }
    }

    pub fn noiseless(dims: usize) -> Self {
        Self::new(0, 0.0, dims)
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn noise(&self, parts: &[&str]) -> f64 {
        if self.sigma == 0.0 {
            0.0
        } else {
            gauss(key(self.seed, parts))
        }
    }

    fn resolve(&self, media: &Media<'_>) -> Result<Concept, PerceptionError> {
        match media {
            Media::Text(text) => {
                if let Some(label) = catalog::label_in_text(text) {
                    return Ok(Concept::of_label(label));
                }
                let words = catalog::tokens(text);
                if let [word] = words.as_slice() {
                    if catalog::is_part_label(word) {
                        return Ok(Concept {
                            part: Some(word.clone()),
                            ..Concept::default()
                        });
                    }
                }
                let class = catalog::class_for_text(text)
                    .ok_or_else(|| PerceptionError::Unresolvable(text.to_string()))?;
                let c = &catalog::CLASSES[class];
                Ok(Concept {
                    class: Some(c.name.to_string()),
                    related: c.container.map(str::to_string),
                    ..Concept::default()
                })
            }
            Media::Image(image) => {
                let (base, part) = split_part(image.as_str());
                let mut concept = if let Some(label) = base.strip_prefix("catalog/") {
                    Concept::of_label(label)
                } else if let Some(rest) = base.strip_prefix("snapshot/") {
                    let head = rest.split('/').next().unwrap_or_default();
                    let (label, blurred) = match head.strip_suffix('~') {
                        Some(l) => (l, true),
                        None => (head, false),
                    };
                    Concept {
                        blurred,
                        ..Concept::of_label(label)
                    }
                } else {
                    return Err(PerceptionError::Unresolvable(image.to_string()));
                };
                if concept.label.as_deref().is_none_or(str::is_empty) {
                    return Err(PerceptionError::Unresolvable(image.to_string()));
                }
                concept.part = part.map(str::to_string);
                Ok(concept)
            }
            Media::Crop { frame, region } => {
                let raster = frame
                    .raster
                    .as_ref()
                    .ok_or_else(|| PerceptionError::Unresolvable(media.key()))?;
                let root = frame.to_root(&region.clip(frame.width, frame.height));
                Ok(match object_under(&raster.objects, &root) {
                    Some((obj, part)) => Concept::of_object(obj, part),
                    None => Concept {
                        empty: true,
                        ..Concept::default()
                    },
                })
            }
        }
    }
}

impl Perception for MockPerception {
    fn detect(
        &self,
        frame: &SceneFrame,
        vocabulary: &[String],
        k: usize,
    ) -> Result<Vec<Detection>, PerceptionError> {
        if k == 0 {
            return Err(PerceptionError::InvalidRequest("k must be at least 1".into()));
        }
        let Some(raster) = frame.raster.as_ref() else {
            return Ok(Vec::new());
        };
        let Some(first_term) = vocabulary.first() else {
            return Ok(Vec::new());
        };
        let vocab_key = vocabulary.join("|");
        let part_terms: Vec<&String> = vocabulary
            .iter()
            .filter(|t| catalog::is_part_label(t))
            .collect();
        let view = frame.view();
        let image = frame.image.as_str();
        let mut dets = Vec::new();
        for obj in &raster.objects {
            let Some(local) = obj.bbox.relative_to(&view) else {
                continue;
            };
            let scale = (-obj.distance / self.lambda).exp()
                * if obj.blurred { BLUR_FACTOR } else { 1.0 };
            let (base, term) = if vocabulary.contains(&obj.label) {
                (EXACT_BASE, obj.label.as_str())
            } else if let Some(t) = vocabulary
                .iter()
                .find(|t| catalog::class_of(t) == Some(obj.class.as_str()))
            {
                (CLASS_BASE, t.as_str())
            } else {
                (OTHER_BASE, first_term.as_str())
            };
            let jitter = (CONFIDENCE_NOISE * self.sigma * self.noise(&[image, &obj.id, &vocab_key])).exp();
            dets.push(Detection {
                label: term.to_string(),
                bbox: local,
                confidence: (base * scale * jitter).clamp(0.0, 1.0),
                rank: 0,
            });
            let Some(first_part) = part_terms.first() else {
                continue;
            };
            for (name, pbox) in &obj.parts {
                let Some(plocal) = pbox.relative_to(&view) else {
                    continue;
                };
                let (base, term) = if part_terms.contains(&name) {
                    (EXACT_BASE, name.as_str())
                } else {
                    (OTHER_PART_BASE, first_part.as_str())
                };
                let jitter = (CONFIDENCE_NOISE
                    * self.sigma
                    * self.noise(&[image, &obj.id, name, &vocab_key]))
                .exp();
                dets.push(Detection {
                    label: term.to_string(),
                    bbox: plocal,
                    confidence: (base * scale * jitter).clamp(0.0, 1.0),
                    rank: 0,
                });
            }
        }
        Ok(rank_detections(dets, k))
    }

    fn similarity(&self, a: &Media<'_>, b: &Media<'_>) -> Result<SimilarityScore, PerceptionError> {
        let (ka, kb) = (a.key(), b.key());
        let ca = self.resolve(a)?;
        let cb = self.resolve(b)?;
        if ka == kb {
            return Ok(SimilarityScore::new(1.0 - SIMILARITY_EPSILON));
        }
        let (lo, hi) = if ka <= kb { (&ka, &kb) } else { (&kb, &ka) };
        let v = concept_similarity(&ca, &cb) + SIMILARITY_NOISE * self.sigma * self.noise(&[lo, hi]);
        Ok(SimilarityScore::new(v))
    }

    fn propose_tool(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<ToolHypothesis, PerceptionError> {
        if instruction.trim().is_empty() {
            return Err(PerceptionError::InvalidRequest("empty instruction".into()));
        }
        let label = frame
            .raster
            .as_ref()
            .and_then(|r| r.tables.tool_for(instruction))
            .ok_or_else(|| PerceptionError::Reasoner(format!("no tool known for {instruction:?}")))?;
        let attributes = catalog::class_of(label)
            .and_then(catalog::class)
            .map(|c| c.attributes.iter().map(|a| a.to_string()).collect())
            .unwrap_or_else(|| vec!["graspable".to_string()]);
        Ok(ToolHypothesis {
            label: label.to_string(),
            attributes,
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
        let Some(raster) = frame.raster.as_ref() else {
            return Ok(0);
        };
        Ok(candidates
            .iter()
            .position(|d| {
                matches!(object_under(&raster.objects, &frame.to_root(&d.bbox)),
                    Some((obj, None)) if obj.label == hypothesis.label)
            })
            .unwrap_or(0))
    }

    fn segment_regions(
        &self,
        tool: &Detection,
        frame: &SceneFrame,
    ) -> Result<(Region, Region), PerceptionError> {
        let fallback = super::fallback_regions(&tool.bbox);
        let Some(raster) = frame.raster.as_ref() else {
            return Ok(fallback);
        };
        let root = frame.to_root(&tool.bbox);
        let best = raster
            .objects
            .iter()
            .map(|o| (iou(&o.bbox, &root), o))
            .filter(|(s, _)| *s >= 0.5)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        let Some((_, obj)) = best else {
            return Ok(fallback);
        };
        let view = frame.view();
        let local = |r: &Region| {
            r.relative_to(&view)
                .and_then(|l| l.intersection(&tool.bbox))
        };
        match (local(&obj.parts[0].1), local(&obj.parts[1].1)) {
            (Some(op), Some(func)) => Ok((op, func)),
            _ => Ok(fallback),
        }
    }

    fn score_affordance(&self, subject: &Media<'_>) -> Result<AffordanceVector, PerceptionError> {
        let class = self
            .resolve(subject)
            .ok()
            .and_then(|c| c.class)
            .and_then(|c| catalog::class_index(&c));
        let Some(class) = class else {
            return Ok(AffordanceVector::uniform(self.dims, NEUTRAL_SCORE));
        };
        let subject_key = subject.key();
        let centroid = catalog::class_centroid(class, self.dims);
        Ok(AffordanceVector::clamped(
            centroid
                .iter()
                .enumerate()
                .map(|(d, v)| v + self.sigma * self.noise(&[&subject_key, &d.to_string()]))
                .collect(),
        ))
    }

    fn infer_unseen_label(
        &self,
        instruction: &str,
        frame: &SceneFrame,
    ) -> Result<String, PerceptionError> {
        if instruction.trim().is_empty() {
            return Err(PerceptionError::InvalidRequest("empty instruction".into()));
        }
        frame
            .raster
            .as_ref()
            .and_then(|r| r.tables.container_for(instruction))
            .map(str::to_string)
            .ok_or_else(|| {
                PerceptionError::Reasoner(format!("no container known for {instruction:?}"))
            })
    }

    /// `snapshot/<label>[~]/<source crop>[#part]`, with `~` marking blur.
    fn snapshot(&self, frame: &SceneFrame, region: &Region) -> ImageRef {
        let source = frame.image.crop(region);
        let Ok(concept) = self.resolve(&Media::Crop {
            frame,
            region: *region,
        }) else {
            return source;
        };
        let Some(label) = concept.label else {
            return source;
        };
        let blur = if concept.blurred { "~" } else { "" };
        let id = ImageRef::new(format!("snapshot/{label}{blur}/{source}"));
        match concept.part {
            Some(p) => id.part(&p),
            None => id,
        }
    }
}
