//! Tunable parameters and the `aide-config/1` file format.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const CONFIG_SCHEMA: &str = "aide-config/1";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid parameters: {0}")]
    Invalid(String),
    #[error("unsupported config schema {found:?}, expected {CONFIG_SCHEMA:?}")]
    Schema { found: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] toml::de::Error),
}

/// Every knob of retrieval, matching, exploration and the execution loop.
/// Field aliases accept the single-letter names used in the literature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfigParams {
    /// Instructions generated before filtering (A).
    #[serde(alias = "A")]
    pub corpus_size: usize,
    /// Instructions kept as indexes after filtering (T); informational.
    #[serde(alias = "T")]
    pub index_size: usize,
    /// Affordance dimensions (X).
    #[serde(alias = "X")]
    pub dims: usize,
    /// Top-level clusters (a).
    #[serde(alias = "a")]
    pub clusters: usize,
    /// Subclusters per cluster (b).
    #[serde(alias = "b")]
    pub subclusters: usize,
    /// Max distance of a kept record from its cluster centroid (D).
    #[serde(alias = "D")]
    pub filter_radius: f64,
    /// Retrieval radius around the query instruction (c).
    #[serde(alias = "c")]
    pub retrieval_radius: f64,
    /// Tool-vector radius for candidate expansion (d).
    #[serde(alias = "d")]
    pub candidate_radius: f64,
    /// Similarity a match must strictly exceed to ground the tool (m).
    #[serde(alias = "m")]
    pub match_threshold: f64,
    /// Detection candidates considered for matching (N).
    #[serde(alias = "N")]
    pub top_n: usize,
    /// Last rank that contributes exploration weight (N').
    #[serde(alias = "N_prime")]
    pub rank_cutoff: usize,
    /// Last rank that may center an exploration square; `None` means 2N.
    pub candidate_rank_max: Option<usize>,
    /// Half-side of exploration squares in pixels (PX).
    #[serde(alias = "PX")]
    pub square_half_side: u32,
    /// Similarity above which exploration is visible rather than invisible.
    pub strategy_threshold: f64,
    /// Confidence + similarity below which no valid tool object is present.
    pub validity_threshold: f64,
    pub frame_period_ms: u64,
    /// World distance at which the robot counts as near its target.
    pub near_radius: f64,
    pub max_subgoal_depth: usize,
    /// Fraction of box size added to each side of a crop.
    pub crop_padding: f64,
}

impl Default for ConfigParams {
    fn default() -> Self {
        Self {
            corpus_size: 1500,
            index_size: 1368,
            dims: 19,
            clusters: 8,
            subclusters: 3,
            filter_radius: 25.0,
            retrieval_radius: 10.0,
            candidate_radius: 15.0,
            match_threshold: 0.85,
            top_n: 5,
            rank_cutoff: 40,
            candidate_rank_max: None,
            square_half_side: 250,
            strategy_threshold: 0.75,
            validity_threshold: 0.5,
            frame_period_ms: 100,
            near_radius: 1.0,
            max_subgoal_depth: 4,
            crop_padding: 0.05,
        }
    }
}

impl ConfigParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.top_n == 0 {
            return fail("N must be at least 1");
        }
        if self.top_n >= self.rank_cutoff {
            return fail("N must be smaller than N'");
        }
        if !(self.match_threshold > 0.0 && self.match_threshold < 1.0) {
            return fail("m must lie in (0, 1)");
        }
        for (name, v) in [
            ("D", self.filter_radius),
            ("c", self.retrieval_radius),
            ("d", self.candidate_radius),
            ("near_radius", self.near_radius),
        ] {
            if v.is_nan() || v < 0.0 {
                return Err(ConfigError::Invalid(format!("{name} must be >= 0")));
            }
        }
        if self.dims == 0 || self.clusters == 0 || self.subclusters == 0 {
            return fail("X, a and b must be positive");
        }
        if let Some(max) = self.candidate_rank_max {
            if max <= self.top_n {
                return fail("candidate_rank_max must exceed N");
            }
        }
        if self.frame_period_ms == 0 {
            return fail("frame_period_ms must be positive");
        }
        Ok(())
    }

    /// Upper rank of exploration square centers.
    pub fn candidate_rank_limit(&self) -> usize {
        self.candidate_rank_max.unwrap_or(2 * self.top_n)
    }

    /// How many detections a matching pass requests so that the top-N,
    /// top-2N and exploration populations all come from one call.
    pub fn detection_budget(&self) -> usize {
        self.rank_cutoff
            .max(2 * self.top_n)
            .max(self.candidate_rank_limit())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathConfig {
    pub space: Option<PathBuf>,
    pub scenarios: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Top-level config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AideConfig {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    /// Perception noise level applied by the mock backend.
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub params: ConfigParams,
    #[serde(default)]
    pub paths: PathConfig,
}

fn default_workers() -> usize {
    1
}

fn default_max_steps() -> usize {
    200
}

impl Default for AideConfig {
    fn default() -> Self {
        Self {
            schema: CONFIG_SCHEMA.to_string(),
            seed: 0,
            noise: 0.0,
            workers: default_workers(),
            max_steps: default_max_steps(),
            params: ConfigParams::default(),
            paths: PathConfig::default(),
        }
    }
}

impl AideConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: AideConfig = toml::from_str(text)?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(ConfigError::Schema { found: cfg.schema });
        }
        cfg.params.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reported_values() {
        let p = ConfigParams::default();
        assert_eq!((p.dims, p.clusters, p.subclusters), (19, 8, 3));
        assert_eq!(
            (p.filter_radius, p.retrieval_radius, p.candidate_radius),
            (25.0, 10.0, 15.0)
        );
        assert_eq!((p.top_n, p.rank_cutoff, p.square_half_side), (5, 40, 250));
        assert_eq!(p.match_threshold, 0.85);
        assert_eq!(p.candidate_rank_limit(), 10);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_bad_thresholds() {
        let mut p = ConfigParams {
            top_n: 40,
            ..Default::default()
        };
        assert!(p.validate().is_err());
        p.top_n = 5;
        p.match_threshold = 1.0;
        assert!(p.validate().is_err());
        p.match_threshold = 0.85;
        p.candidate_radius = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn config_file_round_trip_and_aliases() {
        let cfg = AideConfig::default();
        let text = cfg.to_toml_string();
        assert_eq!(AideConfig::from_toml_str(&text).unwrap(), cfg);

        let short = "schema = \"aide-config/1\"\n[params]\nc = 12.0\nN_prime = 30\n";
        let parsed = AideConfig::from_toml_str(short).unwrap();
        assert_eq!(parsed.params.retrieval_radius, 12.0);
        assert_eq!(parsed.params.rank_cutoff, 30);
        assert_eq!(parsed.params.top_n, 5);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let err = AideConfig::from_toml_str("schema = \"aide-config/9\"").unwrap_err();
        assert!(matches!(err, ConfigError::Schema { .. }));
    }
}
