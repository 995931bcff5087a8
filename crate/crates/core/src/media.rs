//! Opaque media references passed between the planner and perception backends.

use crate::geometry::Region;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Reference to an image: a relative path or an opaque backend id.
///
/// A few id shapes are understood by the simulator-backed mock:
/// `catalog/<label>` for a reference picture of a tool or container,
/// `catalog/<label>#<part>` for one of its parts, and
/// `<frame image>@<x0>,<y0>,<x1>,<y1>` for a crop of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageRef(pub String);

impl ImageRef {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn catalog(label: &str) -> Self {
        Self(format!("catalog/{label}"))
    }

    /// Reference to the `part` of the object shown in `self`.
    pub fn part(&self, part: &str) -> Self {
        Self(format!("{}#{part}", self.0))
    }

    pub fn crop(&self, region: &Region) -> Self {
        Self(format!("{}@{region}", self.0))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Splits `catalog/<label>[#part]` into its label and optional part.
    pub fn catalog_parts(&self) -> Option<(&str, Option<&str>)> {
        let rest = self.0.strip_prefix("catalog/")?;
        match rest.split_once('#') {
            Some((label, part)) => Some((label, Some(part))),
            None => Some((rest, None)),
        }
    }
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_ids_parse() {
        let img = ImageRef::catalog("hammer");
        assert_eq!(img.catalog_parts(), Some(("hammer", None)));
        assert_eq!(img.part("head").catalog_parts(), Some(("hammer", Some("head"))));
        assert_eq!(ImageRef::new("frames/1.png").catalog_parts(), None);
    }

    #[test]
    fn crop_id_embeds_region() {
        let img = ImageRef::new("sim/frame/300");
        assert_eq!(
            img.crop(&Region::new(1, 2, 3, 4)).as_str(),
            "sim/frame/300@1,2,3,4"
        );
    }
}
