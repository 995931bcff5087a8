//! The instruction-tool relationship space: instruction records indexed by a
//! two-level k-means tree over their affordance vectors.
//!
//! Retrieval walks the tree depth first, visiting clusters and subclusters
//! in ascending centroid distance from the query and records in stored
//! order, and stops at the first record within the retrieval radius. The
//! space is immutable once built except for [`RelationshipSpace::insert_record`],
//! which requires exclusive access.

pub mod kmeans;
mod persist;

pub use persist::{read_drafts, write_drafts, SPACE_SCHEMA};

use crate::affordance::{distance, AffordanceError, AffordanceVector};
use crate::config::ConfigParams;
use crate::geometry::Region;
use crate::media::ImageRef;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpaceError {
    #[error(transparent)]
    Affordance(#[from] AffordanceError),
    #[error("cannot build space: {0}")]
    Build(String),
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("record {0:?} is not stored in this space")]
    UnknownRecord(String),
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
    #[error("unsupported space schema {found:?}, expected {SPACE_SCHEMA:?}")]
    Version { found: String },
    #[error("malformed space document: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Grounded tool plus the regions the robot should grasp and apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingResult {
    pub tool_label: String,
    pub tool_image: ImageRef,
    pub tool_region: Region,
    pub operational_region: Region,
    pub functional_region: Region,
    /// Name of the grasped part (e.g. "handle").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operational_label: Option<String>,
    /// Name of the working part (e.g. "head").
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub functional_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen_region_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unseen_region_image: Option<ImageRef>,
}

pub const DEFAULT_OPERATIONAL_PART: &str = "handle";
pub const DEFAULT_FUNCTIONAL_PART: &str = "body";

impl GroundingResult {
    pub fn validate(&self) -> Result<(), String> {
        if self.tool_label.is_empty() {
            return Err("empty tool label".into());
        }
        for r in [
            &self.tool_region,
            &self.operational_region,
            &self.functional_region,
        ] {
            if !r.is_well_formed() {
                return Err(format!("malformed region {r}"));
            }
        }
        if !self.tool_region.contains(&self.operational_region)
            || !self.tool_region.contains(&self.functional_region)
        {
            return Err("part regions must lie inside the tool region".into());
        }
        if self.unseen_region_label.is_some() != self.unseen_region_image.is_some() {
            return Err("unseen label and image must be given together".into());
        }
        Ok(())
    }

    pub fn operational_part(&self) -> &str {
        self.operational_label
            .as_deref()
            .unwrap_or(DEFAULT_OPERATIONAL_PART)
    }

    pub fn functional_part(&self) -> &str {
        self.functional_label
            .as_deref()
            .unwrap_or(DEFAULT_FUNCTIONAL_PART)
    }

    pub fn unseen_hint(&self) -> Option<(&str, &ImageRef)> {
        match (&self.unseen_region_label, &self.unseen_region_image) {
            (Some(l), Some(i)) => Some((l.as_str(), i)),
            _ => None,
        }
    }
}

/// An instruction with its grounding results, before it is placed in a space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDraft {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub text: String,
    pub instruction_affordance: AffordanceVector,
    pub tool_affordance: AffordanceVector,
    pub results: Vec<GroundingResult>,
}

impl RecordDraft {
    fn validate(&self, dims: usize) -> Result<(), SpaceError> {
        let id = self.id.clone().unwrap_or_else(|| self.text.clone());
        let invalid = |reason: String| SpaceError::InvalidRecord {
            id: id.clone(),
            reason,
        };
        self.instruction_affordance.check_dims(dims)?;
        self.tool_affordance.check_dims(dims)?;
        self.instruction_affordance.validate()?;
        self.tool_affordance.validate()?;
        if self.results.is_empty() || self.results.len() > 3 {
            return Err(invalid(format!(
                "expected 1..=3 grounding results, found {}",
                self.results.len()
            )));
        }
        for r in &self.results {
            r.validate().map_err(&invalid)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub id: String,
    pub text: String,
    pub instruction_affordance: AffordanceVector,
    pub tool_affordance: AffordanceVector,
    pub cluster_id: usize,
    pub subcluster_id: usize,
    pub results: Vec<GroundingResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subcluster {
    pub centroid: AffordanceVector,
    pub records: Vec<InstructionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub centroid: AffordanceVector,
    pub subclusters: Vec<Subcluster>,
}

/// Result of a depth-first retrieval.
#[derive(Debug, Clone, Copy)]
pub struct DfsOutcome<'a> {
    /// First record within the radius, or `None` when the query is novel.
    pub hit: Option<&'a InstructionRecord>,
    /// Number of record distance evaluations performed.
    pub visited: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelationshipSpace {
    params: ConfigParams,
    clusters: Vec<Cluster>,
    record_count: usize,
    ids: HashSet<String>,
}

fn ascending_by_distance<'a>(
    query: &[f64],
    centroids: impl Iterator<Item = &'a [f64]>,
) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = centroids
        .enumerate()
        .map(|(i, c)| (crate::affordance::squared_distance(query, c), i))
        .collect();
    // stable sort keeps lower indices first on ties
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0));
    keyed.into_iter().map(|(_, i)| i).collect()
}

impl RelationshipSpace {
    /// Clusters the drafts into `params.clusters` groups, drops drafts whose
    /// instruction or tool vector lies farther than `params.filter_radius`
    /// from their cluster centroid, then splits every cluster into
    /// `params.subclusters` subclusters. Deterministic for a given seed.
    pub fn build(
        drafts: Vec<RecordDraft>,
        params: &ConfigParams,
        seed: u64,
    ) -> Result<Self, SpaceError> {
        params
            .validate()
            .map_err(|e| SpaceError::Build(e.to_string()))?;
        if drafts.is_empty() {
            return Err(SpaceError::Build("no records".into()));
        }
        let mut seen = HashSet::new();
        for d in &drafts {
            d.validate(params.dims)?;
            if let Some(id) = &d.id {
                if !seen.insert(id.clone()) {
                    return Err(SpaceError::DuplicateId(id.clone()));
                }
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points: Vec<&[f64]> = drafts
            .iter()
            .map(|d| d.instruction_affordance.as_slice())
            .collect();
        let top = kmeans::kmeans(&points, params.clusters, kmeans::MAX_ITERATIONS, &mut rng);

        let radius = params.filter_radius;
        let centroid_vecs: Vec<AffordanceVector> = top
            .centroids
            .iter()
            .map(|c| AffordanceVector::clamped(c.clone()))
            .collect();
        let mut members: Vec<Vec<(usize, RecordDraft)>> = vec![Vec::new(); params.clusters];
        let mut survivors = 0;
        for (index, (draft, &cluster)) in drafts.into_iter().zip(&top.assignment).enumerate() {
            let centroid = &centroid_vecs[cluster];
            if distance(&draft.instruction_affordance, centroid)? <= radius
                && distance(&draft.tool_affordance, centroid)? <= radius
            {
                members[cluster].push((index, draft));
                survivors += 1;
            }
        }
        if survivors < params.clusters {
            return Err(SpaceError::Build(format!(
                "only {survivors} records within D={radius} of their centroid, need at least {}",
                params.clusters
            )));
        }

        let mut clusters = Vec::with_capacity(params.clusters);
        let mut ids = HashSet::new();
        for (cluster_id, group) in members.into_iter().enumerate() {
            let centroid = centroid_vecs[cluster_id].clone();
            let mut subclusters: Vec<Subcluster> = (0..params.subclusters)
                .map(|_| Subcluster {
                    centroid: centroid.clone(),
                    records: Vec::new(),
                })
                .collect();
            if !group.is_empty() {
                let pts: Vec<&[f64]> = group
                    .iter()
                    .map(|(_, d)| d.instruction_affordance.as_slice())
                    .collect();
                let sub = kmeans::kmeans(&pts, params.subclusters, kmeans::MAX_ITERATIONS, &mut rng);
                for (s, c) in subclusters.iter_mut().zip(&sub.centroids) {
                    s.centroid = AffordanceVector::clamped(c.clone());
                }
                for ((index, draft), &subcluster_id) in group.into_iter().zip(&sub.assignment) {
                    let id = draft.id.unwrap_or_else(|| format!("rec-{index:05}"));
                    if !ids.insert(id.clone()) {
                        return Err(SpaceError::DuplicateId(id));
                    }
                    subclusters[subcluster_id].records.push(InstructionRecord {
                        id,
                        text: draft.text,
                        instruction_affordance: draft.instruction_affordance,
                        tool_affordance: draft.tool_affordance,
                        cluster_id,
                        subcluster_id,
                        results: draft.results,
                    });
                }
            }
            clusters.push(Cluster {
                centroid,
                subclusters,
            });
        }

        Ok(Self {
            params: params.clone(),
            clusters,
            record_count: survivors,
            ids,
        })
    }

    pub fn params(&self) -> &ConfigParams {
        &self.params
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn record_count(&self) -> usize {
        self.record_count
    }

    pub fn dims(&self) -> usize {
        self.params.dims
    }

    /// All records in tree order (cluster, subcluster, stored order).
    pub fn records(&self) -> impl Iterator<Item = &InstructionRecord> {
        self.clusters
            .iter()
            .flat_map(|c| c.subclusters.iter())
            .flat_map(|s| s.records.iter())
    }

    pub fn get(&self, id: &str) -> Option<&InstructionRecord> {
        if !self.ids.contains(id) {
            return None;
        }
        self.records().find(|r| r.id == id)
    }

    /// Depth-first retrieval of the first record whose instruction vector lies
    /// within `radius` of `query`.
    pub fn dfs_retrieve(
        &self,
        query: &AffordanceVector,
        radius: f64,
    ) -> Result<DfsOutcome<'_>, SpaceError> {
        query.check_dims(self.params.dims)?;
        let q = query.as_slice();
        let mut visited = 0;
        let cluster_order = ascending_by_distance(
            q,
            self.clusters.iter().map(|c| c.centroid.as_slice()),
        );
        for ci in cluster_order {
            let cluster = &self.clusters[ci];
            let sub_order = ascending_by_distance(
                q,
                cluster.subclusters.iter().map(|s| s.centroid.as_slice()),
            );
            for si in sub_order {
                for record in &cluster.subclusters[si].records {
                    visited += 1;
                    if distance(query, &record.instruction_affordance)? <= radius {
                        return Ok(DfsOutcome {
                            hit: Some(record),
                            visited,
                        });
                    }
                }
            }
        }
        Ok(DfsOutcome { hit: None, visited })
    }

    /// Records in the anchor's subcluster whose tool vectors lie within
    /// `radius` of the anchor's, sorted by distance then id.
    pub fn candidate_set(
        &self,
        anchor: &InstructionRecord,
        radius: f64,
    ) -> Result<Vec<&InstructionRecord>, SpaceError> {
        let sub = self
            .clusters
            .get(anchor.cluster_id)
            .and_then(|c| c.subclusters.get(anchor.subcluster_id))
            .filter(|s| s.records.iter().any(|r| r.id == anchor.id))
            .ok_or_else(|| SpaceError::UnknownRecord(anchor.id.clone()))?;
        let mut found = Vec::new();
        for r in &sub.records {
            let d = distance(&anchor.tool_affordance, &r.tool_affordance)?;
            if d <= radius {
                found.push((d, r));
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        Ok(found.into_iter().map(|(_, r)| r).collect())
    }

    /// Places a new record in its nearest cluster and subcluster without
    /// moving any centroid. A missing id is generated.
    pub fn insert_record(&mut self, draft: RecordDraft) -> Result<&InstructionRecord, SpaceError> {
        draft.validate(self.params.dims)?;
        let id = draft
            .id
            .clone()
            .unwrap_or_else(|| format!("ins-{:05}", self.record_count));
        if self.ids.contains(&id) {
            return Err(SpaceError::DuplicateId(id));
        }
        let q = draft.instruction_affordance.as_slice();
        let cluster_centroids: Vec<Vec<f64>> = self
            .clusters
            .iter()
            .map(|c| c.centroid.as_slice().to_vec())
            .collect();
        let cluster_id = kmeans::nearest(q, &cluster_centroids);
        let cluster = &mut self.clusters[cluster_id];
        let sub_centroids: Vec<Vec<f64>> = cluster
            .subclusters
            .iter()
            .map(|s| s.centroid.as_slice().to_vec())
            .collect();
        let subcluster_id = kmeans::nearest(q, &sub_centroids);
        let records = &mut cluster.subclusters[subcluster_id].records;
        records.push(InstructionRecord {
            id: id.clone(),
            text: draft.text,
            instruction_affordance: draft.instruction_affordance,
            tool_affordance: draft.tool_affordance,
            cluster_id,
            subcluster_id,
            results: draft.results,
        });
        self.ids.insert(id);
        self.record_count += 1;
        Ok(records.last().expect("just pushed"))
    }

    /// Checks the structural invariants of a space, e.g. after loading.
    pub fn check_invariants(&self) -> Result<(), SpaceError> {
        let bad = |reason: String| SpaceError::Parse(reason);
        if self.clusters.len() != self.params.clusters {
            return Err(bad(format!(
                "expected {} clusters, found {}",
                self.params.clusters,
                self.clusters.len()
            )));
        }
        let mut ids = HashSet::new();
        let mut count = 0;
        for (ci, c) in self.clusters.iter().enumerate() {
            c.centroid.check_dims(self.params.dims)?;
            if c.subclusters.len() != self.params.subclusters {
                return Err(bad(format!("cluster {ci} has {} subclusters", c.subclusters.len())));
            }
            for (si, s) in c.subclusters.iter().enumerate() {
                s.centroid.check_dims(self.params.dims)?;
                for r in &s.records {
                    if r.cluster_id != ci || r.subcluster_id != si {
                        return Err(bad(format!("record {} stored under wrong node", r.id)));
                    }
                    if !ids.insert(r.id.clone()) {
                        return Err(SpaceError::DuplicateId(r.id.clone()));
                    }
                    RecordDraft {
                        id: Some(r.id.clone()),
                        text: r.text.clone(),
                        instruction_affordance: r.instruction_affordance.clone(),
                        tool_affordance: r.tool_affordance.clone(),
                        results: r.results.clone(),
                    }
                    .validate(self.params.dims)?;
                    count += 1;
                }
            }
        }
        if count != self.record_count {
            return Err(bad(format!(
                "record_count {} does not match {count} stored records",
                self.record_count
            )));
        }
        Ok(())
    }

    pub(crate) fn from_parts(
        params: ConfigParams,
        clusters: Vec<Cluster>,
        record_count: usize,
    ) -> Result<Self, SpaceError> {
        let ids = clusters
            .iter()
            .flat_map(|c| c.subclusters.iter())
            .flat_map(|s| s.records.iter())
            .map(|r| r.id.clone())
            .collect();
        let space = Self {
            params,
            clusters,
            record_count,
            ids,
        };
        space.check_invariants()?;
        Ok(space)
    }
}
