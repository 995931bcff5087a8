//! Built-in world knowledge shared by the simulator, the mock perception
//! backend and the synthetic corpus generator: affordance classes, the tool
//! and container labels belonging to them, part names, and class centroids in
//! affordance space.

use crate::seeded::splitmix64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug)]
pub struct AffordanceClass {
    pub name: &'static str,
    pub labels: &'static [&'static str],
    /// Descriptors a reasoner would attach to a proposed tool of this class.
    pub attributes: &'static [&'static str],
    /// Where tools of this class are usually stored out of sight.
    pub container: Option<&'static str>,
    /// Everyday phrasings of instructions that call for this class.
    pub phrases: &'static [&'static str],
}

pub const STORAGE_CLASS: &str = "storage";
pub const MISC_CLASS: &str = "misc";

/// Classes used by the synthetic corpus come first; `writing` and
/// `lighting` are tool classes left out of the default corpus so that
/// their instructions are novel to a default space.
pub const CLASSES: &[AffordanceClass] = &[
    AffordanceClass {
        name: "drinking",
        attributes: &["graspable", "holds liquid"],
        labels: &["cup", "mug", "glass", "bottle", "bowl"],
        container: Some("cabinet"),
        phrases: &[
            "I am thirsty",
            "my throat feels dry",
            "I need a sip of water",
            "I would like some warm tea",
            "I want to drink something",
        ],
    },
    AffordanceClass {
        name: "beverage",
        attributes: &["graspable", "chilled", "drinkable"],
        labels: &["coke", "juice", "milk", "soda", "lemonade"],
        container: Some("fridge"),
        phrases: &[
            "I want something cold to drink",
            "I crave a chilled soda",
            "I need a cold refreshment",
            "something fizzy would be great",
            "I want a cool drink",
        ],
    },
    AffordanceClass {
        name: "cleaning",
        attributes: &["graspable", "removes dust"],
        labels: &["brush", "sponge", "cloth", "broom", "duster"],
        container: Some("cabinet"),
        phrases: &[
            "I want to clean the dust",
            "the table is dusty",
            "wipe up this mess",
            "the floor needs sweeping",
            "there are crumbs everywhere",
        ],
    },
    AffordanceClass {
        name: "striking",
        attributes: &["graspable", "heavy head"],
        labels: &["hammer", "mallet", "wrench", "stone", "rolling_pin"],
        container: Some("toolbox"),
        phrases: &[
            "I want to crack walnuts",
            "this nail sticks out",
            "I need to pound something",
            "help me crush these nuts",
            "knock this peg in",
        ],
    },
    AffordanceClass {
        name: "cutting",
        attributes: &["graspable", "sharp edge"],
        labels: &["knife", "scissors", "cutter", "razor", "saw"],
        container: Some("drawer"),
        phrases: &[
            "I want to slice bread",
            "open this sealed package",
            "trim this loose string",
            "cut the paper in half",
            "I need to split the apple",
        ],
    },
    AffordanceClass {
        name: "fastening",
        attributes: &["adhesive", "binds objects"],
        labels: &["tape", "glue", "stapler", "rope", "clip"],
        container: Some("drawer"),
        phrases: &[
            "I want to close up delivery boxes tightly",
            "seal this envelope",
            "keep these papers together",
            "fix the torn page",
            "bind the bundle of sticks",
        ],
    },
    AffordanceClass {
        name: "comfort",
        attributes: &["soft", "supportive"],
        labels: &["pillow", "cushion", "towel", "blanket", "backrest"],
        container: Some("closet"),
        phrases: &[
            "I want to support my waist while sitting",
            "my back hurts on this chair",
            "I need something soft to lean on",
            "make the seat comfier",
            "my neck needs support",
        ],
    },
    AffordanceClass {
        name: "heating",
        attributes: &["graspable", "produces heat"],
        labels: &["kettle", "lighter", "hair_dryer", "heater", "iron"],
        container: Some("cabinet"),
        phrases: &[
            "I want to warm up my hands",
            "my hair is still wet",
            "boil some water for me",
            "this shirt is wrinkled",
            "it is freezing in here",
        ],
    },
    AffordanceClass {
        name: "writing",
        attributes: &["graspable", "leaves marks"],
        labels: &["pen", "pencil", "marker", "crayon", "chalk"],
        container: Some("drawer"),
        phrases: &[
            "I want to jot down a note",
            "sign this form for me",
            "I need to mark this box",
            "let me sketch an idea",
            "write my name on the board",
        ],
    },
    AffordanceClass {
        name: "lighting",
        attributes: &["portable", "emits light"],
        labels: &["flashlight", "lamp", "candle", "torch", "lantern"],
        container: Some("cabinet"),
        phrases: &[
            "it is too dark to see",
            "the power went out",
            "I cannot find my way at night",
            "light up the corner",
            "I need to look under the bed",
        ],
    },
    AffordanceClass {
        name: STORAGE_CLASS,
        attributes: &["openable", "encloses objects"],
        labels: &["fridge", "drawer", "cabinet", "toolbox", "closet", "box"],
        container: None,
        phrases: &[],
    },
    AffordanceClass {
        name: MISC_CLASS,
        attributes: &[],
        labels: &[
            "book", "plant", "phone", "remote", "shoe", "clock", "vase", "laptop", "keys", "wallet",
        ],
        container: None,
        phrases: &[],
    },
];

/// Number of leading classes the default synthetic corpus draws from.
pub const CORPUS_CLASS_COUNT: usize = 8;

/// Number of classes whose members are tools (everything before storage).
pub const TOOL_CLASS_COUNT: usize = 10;

pub fn class_index(name: &str) -> Option<usize> {
    CLASSES.iter().position(|c| c.name == name)
}

pub fn class(name: &str) -> Option<&'static AffordanceClass> {
    CLASSES.iter().find(|c| c.name == name)
}

/// Affordance class of a catalog label.
pub fn class_of(label: &str) -> Option<&'static str> {
    CLASSES
        .iter()
        .find(|c| c.labels.contains(&label))
        .map(|c| c.name)
}

pub fn is_part_label(word: &str) -> bool {
    PART_NAMES.contains(&word)
}

const PART_NAMES: &[&str] = &[
    "handle", "body", "head", "bristles", "blade", "spout", "plate", "door", "front", "lid",
];

/// Operational and functional part names of a label.
pub fn parts_of(label: &str) -> (&'static str, &'static str) {
    match label {
        "hammer" | "mallet" => ("handle", "head"),
        "brush" | "broom" | "duster" => ("handle", "bristles"),
        "knife" | "saw" | "scissors" | "cutter" => ("handle", "blade"),
        "kettle" => ("handle", "spout"),
        "iron" => ("handle", "plate"),
        "fridge" | "cabinet" | "closet" => ("handle", "door"),
        "drawer" => ("handle", "front"),
        "toolbox" | "box" => ("handle", "lid"),
        _ => ("handle", "body"),
    }
}

const STOPWORDS: &[&str] = &[
    "a", "am", "an", "and", "at", "be", "can", "for", "i", "in", "is", "it", "let", "like", "me",
    "my", "need", "of", "on", "please", "so", "some", "something", "the", "this", "to", "up",
    "want", "would", "you", "here", "there", "hey", "robot", "help", "again", "now", "right",
    "if", "with",
];

/// Lowercased alphanumeric words of `text`.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric() && c != '_')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn content_tokens(text: &str) -> Vec<String> {
    tokens(text)
        .into_iter()
        .filter(|w| !STOPWORDS.contains(&w.as_str()))
        .collect()
}

/// Catalog label spelled by `text` ("hair dryer" and "hair_dryer" both match).
pub fn label_in_text(text: &str) -> Option<&'static str> {
    let key = tokens(text).join("_");
    CLASSES
        .iter()
        .flat_map(|c| c.labels.iter())
        .find(|l| **l == key)
        .copied()
}

/// Index of the tool class whose phrases share the most content words with
/// `text`. Lower indices win ties; `None` when nothing overlaps.
pub fn class_for_text(text: &str) -> Option<usize> {
    let words = content_tokens(text);
    let mut best: Option<(usize, usize)> = None;
    for (i, class) in CLASSES.iter().enumerate().take(TOOL_CLASS_COUNT) {
        let score = class
            .phrases
            .iter()
            .map(|p| {
                let pw = content_tokens(p);
                words.iter().filter(|w| pw.contains(w)).count()
            })
            .max()
            .unwrap_or(0);
        if score > 0 && best.is_none_or(|(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i)
}

const CORNER_LOW: f64 = 1.5;
const CORNER_HIGH: f64 = 8.5;

fn corner(dims: usize, stream: u64) -> Vec<bool> {
    (0..dims)
        .map(|d| splitmix64(stream ^ (d as u64).wrapping_mul(0x9E37)) & 1 == 1)
        .collect()
}

fn hamming(a: &[bool], b: &[bool]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

fn generate_centroids(dims: usize) -> Vec<Vec<f64>> {
    // hypercube corners kept at least 40% of the dimensions apart
    let min_hamming = (dims * 2).div_ceil(5);
    let mut chosen: Vec<Vec<bool>> = Vec::new();
    for class in 0..CLASSES.len() {
        let mut best: Option<(usize, Vec<bool>)> = None;
        for attempt in 0..4096u64 {
            let cand = corner(dims, splitmix64((class as u64) << 32 | attempt));
            let score = chosen.iter().map(|c| hamming(c, &cand)).min().unwrap_or(dims);
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, cand));
            }
            if score >= min_hamming {
                break;
            }
        }
        chosen.push(best.expect("at least one attempt").1);
    }
    chosen
        .into_iter()
        .map(|bits| {
            bits.into_iter()
                .map(|b| if b { CORNER_HIGH } else { CORNER_LOW })
                .collect()
        })
        .collect()
}

type CentroidTable = Arc<Vec<Vec<f64>>>;

fn centroid_table(dims: usize) -> CentroidTable {
    static CACHE: OnceLock<Mutex<HashMap<usize, CentroidTable>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("centroid cache poisoned");
    guard
        .entry(dims)
        .or_insert_with(|| Arc::new(generate_centroids(dims)))
        .clone()
}

/// Centroid of a class in a `dims`-dimensional affordance space.
pub fn class_centroid(class_index: usize, dims: usize) -> Vec<f64> {
    centroid_table(dims)[class_index].clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affordance::squared_distance;

    #[test]
    fn labels_are_unique_across_classes() {
        let mut seen = std::collections::HashSet::new();
        for c in CLASSES {
            for l in c.labels {
                assert!(seen.insert(*l), "duplicate label {l}");
            }
        }
        assert_eq!(CLASSES[TOOL_CLASS_COUNT].name, STORAGE_CLASS);
    }

    #[test]
    fn class_centroids_are_well_separated() {
        let min = (0..CLASSES.len())
            .flat_map(|a| (a + 1..CLASSES.len()).map(move |b| (a, b)))
            .map(|(a, b)| squared_distance(&class_centroid(a, 19), &class_centroid(b, 19)).sqrt())
            .fold(f64::INFINITY, f64::min);
        assert!(min >= 19.0, "min separation {min}");
    }

    #[test]
    fn every_container_is_a_storage_label() {
        for c in CLASSES {
            if let Some(container) = c.container {
                assert_eq!(class_of(container), Some(STORAGE_CLASS));
            }
        }
    }
    #[test]
    fn phrases_resolve_to_their_own_class() {
        for (i, c) in CLASSES.iter().enumerate().take(TOOL_CLASS_COUNT) {
            for p in c.phrases {
                assert_eq!(class_for_text(p), Some(i), "{p}");
            }
        }
        assert_eq!(class_for_text("zzz qqq"), None);
        assert_eq!(label_in_text("Hair dryer"), Some("hair_dryer"));
        assert_eq!(label_in_text("a cup"), None);
    }
}
