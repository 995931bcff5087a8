//! JSON persistence for spaces (`aide-space/1`) and line-delimited draft corpora.

use super::{Cluster, RecordDraft, RelationshipSpace, SpaceError};
use crate::config::ConfigParams;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const SPACE_SCHEMA: &str = "aide-space/1";

#[derive(Serialize, Deserialize)]
struct SpaceDocument {
    schema: String,
    params: ConfigParams,
    record_count: usize,
    clusters: Vec<Cluster>,
}

#[derive(Deserialize)]
struct SchemaProbe {
    schema: String,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SpaceError + '_ {
    move |source| SpaceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl RelationshipSpace {
    pub fn to_json(&self) -> String {
        let doc = SpaceDocument {
            schema: SPACE_SCHEMA.to_string(),
            params: self.params.clone(),
            record_count: self.record_count,
            clusters: self.clusters.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("space serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SpaceError> {
        let probe: SchemaProbe =
            serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        if probe.schema != SPACE_SCHEMA {
            return Err(SpaceError::Version {
                found: probe.schema,
            });
        }
        let doc: SpaceDocument =
            serde_json::from_str(text).map_err(|e| SpaceError::Parse(e.to_string()))?;
        doc.params
            .validate()
            .map_err(|e| SpaceError::Parse(e.to_string()))?;
        Self::from_parts(doc.params, doc.clusters, doc.record_count)
    }

    pub fn save(&self, path: &Path) -> Result<(), SpaceError> {
        std::fs::write(path, self.to_json()).map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, SpaceError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json(&text)
    }
}

/// Writes one JSON draft per line.
pub fn write_drafts(path: &Path, drafts: &[RecordDraft]) -> Result<(), SpaceError> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for d in drafts {
        let line = serde_json::to_string(d).expect("draft serializes");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Reads a line-delimited draft file; blank lines are skipped.
pub fn read_drafts(path: &Path) -> Result<Vec<RecordDraft>, SpaceError> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut drafts = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let draft = serde_json::from_str(&line)
            .map_err(|e| SpaceError::Parse(format!("line {}: {e}", n + 1)))?;
        drafts.push(draft);
    }
    Ok(drafts)
}
