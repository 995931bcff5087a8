//! Synthetic instruction corpora: records drawn around the catalog's class
//! centroids, with everyday phrasings as instruction text.

use crate::affordance::{AffordanceVector, MAX_SCORE};
use crate::catalog::{self, CLASSES, TOOL_CLASS_COUNT};
use crate::geometry::Region;
use crate::media::ImageRef;
use crate::space::{GroundingResult, RecordDraft};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSpec {
    pub size: usize,
    pub dims: usize,
    pub classes: usize,
    /// Modes per class; records of one mode share a small offset.
    pub modes: usize,
    pub seed: u64,
    pub instruction_noise: f64,
    pub tool_noise: f64,
    /// Fraction of records whose tool vector is mirrored away from the class.
    pub outlier_rate: f64,
}

impl CorpusSpec {
    pub fn new(size: usize, dims: usize, classes: usize, modes: usize, seed: u64) -> Self {
        Self {
            size,
            dims,
            classes,
            modes,
            seed,
            instruction_noise: 1.0,
            tool_noise: 1.0,
            outlier_rate: 0.08,
        }
    }
}

/// A generated draft with the class it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDraft {
    pub class: usize,
    pub draft: RecordDraft,
}

const PREFIXES: &[&str] = &["", "hey, ", "robot, ", "please, ", "excuse me, "];
const SUFFIXES: &[&str] = &["", " please", " right now", " if you can", " for me"];
const MODE_OFFSET: f64 = 1.5;
const MODE_DIMS: usize = 3;

/// Instruction text for class `class`, varied by `rng`.
pub fn instruction_text<R: Rng>(class: usize, rng: &mut R) -> String {
    let c = &CLASSES[class];
    let phrase = c.phrases.choose(rng).expect("tool classes have phrases");
    let prefix = PREFIXES.choose(rng).expect("non-empty");
    let suffix = SUFFIXES.choose(rng).expect("non-empty");
    format!("{prefix}{phrase}{suffix}")
}

/// A stored grounding result for `label`, with default part regions and the
/// class container as unseen hint.
pub fn catalog_result(label: &str) -> GroundingResult {
    let tool_region = Region::new(0, 0, 120, 240);
    let (lower, upper) = tool_region.split_halves();
    let (op, func) = catalog::parts_of(label);
    let container = catalog::class_of(label)
        .and_then(catalog::class)
        .and_then(|c| c.container);
    GroundingResult {
        tool_label: label.to_string(),
        tool_image: ImageRef::catalog(label),
        tool_region,
        operational_region: lower,
        functional_region: upper,
        operational_label: Some(op.to_string()),
        functional_label: Some(func.to_string()),
        unseen_region_label: container.map(str::to_string),
        unseen_region_image: container.map(ImageRef::catalog),
    }
}

fn perturb<R: Rng>(base: &[f64], sigma: f64, rng: &mut R) -> AffordanceVector {
    let normal = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    AffordanceVector::clamped(base.iter().map(|v| v + normal.sample(rng)).collect())
}

/// `spec.size` drafts spread round-robin over the first `spec.classes`
/// tool classes. Deterministic for a given spec.
pub fn gen_corpus(spec: &CorpusSpec) -> Result<Vec<LabeledDraft>, String> {
    if spec.classes == 0 || spec.classes > TOOL_CLASS_COUNT {
        return Err(format!(
            "class count must lie in 1..={TOOL_CLASS_COUNT}, got {}",
            spec.classes
        ));
    }
    if spec.dims == 0 {
        return Err("dimension count must be positive".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let modes = spec.modes.max(1);
    // per (class, mode) offsets on a few dimensions
    let offsets: Vec<Vec<f64>> = (0..spec.classes * modes)
        .map(|_| {
            let mut o = vec![0.0; spec.dims];
            for _ in 0..MODE_DIMS.min(spec.dims) {
                let d = rng.random_range(0..spec.dims);
                o[d] = if rng.random::<bool>() { MODE_OFFSET } else { -MODE_OFFSET };
            }
            o
        })
        .collect();
    let mut out = Vec::with_capacity(spec.size);
    for i in 0..spec.size {
        let class = i % spec.classes;
        let mode = (i / spec.classes) % modes;
        let centroid = catalog::class_centroid(class, spec.dims);
        let center: Vec<f64> = centroid
            .iter()
            .zip(&offsets[class * modes + mode])
            .map(|(c, o)| c + o)
            .collect();
        let instruction = perturb(&center, spec.instruction_noise, &mut rng);
        let tool = if rng.random::<f64>() < spec.outlier_rate {
            let mirrored: Vec<f64> = centroid.iter().map(|c| MAX_SCORE - c).collect();
            perturb(&mirrored, spec.tool_noise, &mut rng)
        } else {
            perturb(&centroid, spec.tool_noise, &mut rng)
        };
        let labels = CLASSES[class].labels;
        let n_results = rng.random_range(1..=3usize);
        let results = labels
            .choose_multiple(&mut rng, n_results)
            .map(|l| catalog_result(l))
            .collect();
        out.push(LabeledDraft {
            class,
            draft: RecordDraft {
                id: Some(format!("rec-{i:05}")),
                text: instruction_text(class, &mut rng),
                instruction_affordance: instruction,
                tool_affordance: tool,
                results,
            },
        });
    }
    Ok(out)
}

/// Drafts without their class labels.
pub fn drafts(labeled: &[LabeledDraft]) -> Vec<RecordDraft> {
    labeled.iter().map(|l| l.draft.clone()).collect()
}
