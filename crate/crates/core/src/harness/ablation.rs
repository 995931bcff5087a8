//! Retrieval ablation: affordance-space DFS against a text-similarity scan,
//! with an exhaustive-search reference row.

use crate::affordance::{squared_distance, AffordanceVector};
use crate::corpus::LabeledDraft;
use crate::space::{InstructionRecord, RelationshipSpace};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

/// Statement of what "accuracy" means, carried in the table metadata.
pub const TARGET_NOTE: &str = "validated target: the brute-force nearest record within the threshold \
     (the nearest record overall for text similarity and ES); a hit counts when its class matches the target's";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    /// DFS over the clustered affordance space with radius `c`.
    Affordance,
    /// Best token-bag cosine between instruction texts, accepted when it
    /// reaches the threshold.
    Textsim,
}

impl std::str::FromStr for RetrievalMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "affordance" => Ok(Self::Affordance),
            "textsim" => Ok(Self::Textsim),
            other => Err(format!("unknown retrieval method {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationQuery {
    pub text: String,
    pub affordance: AffordanceVector,
    pub class: usize,
}

impl AblationQuery {
    pub fn from_drafts(labeled: &[LabeledDraft]) -> Vec<Self> {
        labeled
            .iter()
            .map(|l| Self {
                text: l.draft.text.clone(),
                affordance: l.draft.instruction_affordance.clone(),
                class: l.class,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    /// `None` for the exhaustive-search row.
    pub threshold: Option<f64>,
    pub label: String,
    /// Mean wall time per query, milliseconds.
    pub mean_time_ms: f64,
    /// Percentage of queries whose result agrees with the validated target.
    pub accuracy: f64,
    /// Percentage of hits drawn from the query's own class.
    pub class_accuracy: f64,
    /// Percentage of queries that returned a record.
    pub found_rate: f64,
    /// Mean record-distance (or text-similarity) evaluations per query.
    pub mean_visited: f64,
    /// Percentage of queries that visited fewer records than the space holds.
    pub pruned_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub method: RetrievalMethod,
    pub target: String,
    pub queries: usize,
    pub records: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, threshold: f64) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.threshold == Some(threshold))
    }

    pub fn exhaustive(&self) -> &AblationRow {
        self.rows
            .iter()
            .find(|r| r.threshold.is_none())
            .expect("tables always carry the ES row")
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "# method={:?} queries={} records={}\n# {}\n| threshold | time (ms) | accuracy (%) | class accuracy (%) | found (%) | visited |\n|---|---|---|---|---|---|\n",
            self.method, self.queries, self.records, self.target
        );
        for r in &self.rows {
            out += &format!(
                "| {} | {:.4} | {:.1} | {:.1} | {:.1} | {:.1} |\n",
                r.label, r.mean_time_ms, r.accuracy, r.class_accuracy, r.found_rate, r.mean_visited
            );
        }
        out
    }
}

fn tokens(text: &str) -> BTreeMap<String, f64> {
    let mut bag = BTreeMap::new();
    for t in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        *bag.entry(t.to_lowercase()).or_insert(0.0) += 1.0;
    }
    bag
}

fn bag_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        dot / denom
    }
}

/// Token-bag cosine similarity of two texts, case-insensitive, in [0, 1].
pub fn text_cosine(a: &str, b: &str) -> f64 {
    bag_cosine(&tokens(a), &tokens(b))
}

struct Outcome<'a> {
    hit: Option<&'a InstructionRecord>,
    target: Option<&'a InstructionRecord>,
    visited: usize,
}

fn nearest<'a>(records: &[&'a InstructionRecord], q: &[f64]) -> Option<(&'a InstructionRecord, f64)> {
    records
        .iter()
        .map(|r| (*r, squared_distance(q, r.instruction_affordance.as_slice())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

fn summarize(
    label: String,
    threshold: Option<f64>,
    elapsed_ms: f64,
    outcomes: &[Outcome<'_>],
    queries: &[AblationQuery],
    class_of: &HashMap<String, usize>,
    record_count: usize,
) -> AblationRow {
    let n = outcomes.len().max(1) as f64;
    let class = |r: &InstructionRecord| class_of.get(&r.id).copied();
    let agrees = outcomes
        .iter()
        .filter(|o| match (o.hit, o.target) {
            (None, None) => true,
            (Some(h), Some(t)) => h.id == t.id || (class(h).is_some() && class(h) == class(t)),
            _ => false,
        })
        .count();
    let found = outcomes.iter().filter(|o| o.hit.is_some()).count();
    let own_class = outcomes
        .iter()
        .zip(queries)
        .filter(|(o, q)| o.hit.is_some_and(|h| class(h) == Some(q.class)))
        .count();
    AblationRow {
        threshold,
        label,
        mean_time_ms: elapsed_ms / n,
        accuracy: 100.0 * agrees as f64 / n,
        class_accuracy: if found == 0 { 0.0 } else { 100.0 * own_class as f64 / found as f64 },
        found_rate: 100.0 * found as f64 / n,
        mean_visited: outcomes.iter().map(|o| o.visited as f64).sum::<f64>() / n,
        pruned_rate: 100.0 * outcomes.iter().filter(|o| o.visited < record_count).count() as f64 / n,
    }
}

/// One row per threshold plus the exhaustive-search row. `class_of` maps
/// record ids to their generating class. Times cover the retrieval loop
/// only; oracle targets are computed outside it.
pub fn ablate_retrieval(
    space: &RelationshipSpace,
    queries: &[AblationQuery],
    class_of: &HashMap<String, usize>,
    method: RetrievalMethod,
    thresholds: &[f64],
) -> AblationTable {
    let records: Vec<&InstructionRecord> = space.records().collect();
    let count = records.len();
    let mut rows = Vec::with_capacity(thresholds.len() + 1);

    // ES: nearest record overall, the reference every method is timed against
    let started = Instant::now();
    let es: Vec<Option<&InstructionRecord>> = queries
        .iter()
        .map(|q| nearest(&records, q.affordance.as_slice()).map(|(r, _)| r))
        .collect();
    let es_ms = started.elapsed().as_secs_f64() * 1e3;
    let es_outcomes: Vec<Outcome> = es
        .iter()
        .map(|&r| Outcome { hit: r, target: r, visited: count })
        .collect();

    match method {
        RetrievalMethod::Affordance => {
            for &c in thresholds {
                let started = Instant::now();
                let found: Vec<(Option<&InstructionRecord>, usize)> = queries
                    .iter()
                    .map(|q| {
                        let o = space
                            .dfs_retrieve(&q.affordance, c)
                            .expect("queries share the space's dimension");
                        (o.hit, o.visited)
                    })
                    .collect();
                let ms = started.elapsed().as_secs_f64() * 1e3;
                let outcomes: Vec<Outcome> = found
                    .into_iter()
                    .zip(queries)
                    .map(|((hit, visited), q)| Outcome {
                        hit,
                        target: nearest(&records, q.affordance.as_slice())
                            .filter(|(_, d2)| d2.sqrt() <= c)
                            .map(|(r, _)| r),
                        visited,
                    })
                    .collect();
                rows.push(summarize(format!("c={c}"), Some(c), ms, &outcomes, queries, class_of, count));
            }
        }
        RetrievalMethod::Textsim => {
            let bags: Vec<BTreeMap<String, f64>> = records.iter().map(|r| tokens(&r.text)).collect();
            for &tau in thresholds {
                let started = Instant::now();
                let found: Vec<Option<&InstructionRecord>> = queries
                    .iter()
                    .map(|q| {
                        let qb = tokens(&q.text);
                        bags.iter()
                            .enumerate()
                            .map(|(i, b)| (i, bag_cosine(&qb, b)))
                            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                            .filter(|(_, s)| *s >= tau)
                            .map(|(i, _)| records[i])
                    })
                    .collect();
                let ms = started.elapsed().as_secs_f64() * 1e3;
                let outcomes: Vec<Outcome> = found
                    .into_iter()
                    .zip(&es)
                    .map(|(hit, &target)| Outcome { hit, target, visited: count })
                    .collect();
                rows.push(summarize(format!("s={tau}"), Some(tau), ms, &outcomes, queries, class_of, count));
            }
        }
    }
    rows.push(summarize("ES".into(), None, es_ms, &es_outcomes, queries, class_of, count));
    AblationTable {
        method,
        target: TARGET_NOTE.to_string(),
        queries: queries.len(),
        records: count,
        rows,
    }
}

/// Record id to generating class.
pub fn class_index(labeled: &[LabeledDraft]) -> HashMap<String, usize> {
    labeled
        .iter()
        .filter_map(|l| l.draft.id.clone().map(|id| (id, l.class)))
        .collect()
}
