//! Fixtures shared by unit tests.

use crate::catalog;
use crate::config::ConfigParams;
use crate::corpus::{self, CorpusSpec};
use crate::geometry::Region;
use crate::media::ImageRef;
use crate::perception::{Raster, RasterObject, ScenarioTables, SceneFrame, Viewpoint};
use crate::space::RelationshipSpace;

/// A raster object whose parts are the lower and upper halves of its box.
pub fn object(id: &str, label: &str, bbox: Region, distance: f64, blurred: bool) -> RasterObject {
    let (lower, upper) = bbox.split_halves();
    object_with_parts(id, label, bbox, distance, blurred, lower, upper)
}

pub fn object_with_parts(
    id: &str,
    label: &str,
    bbox: Region,
    distance: f64,
    blurred: bool,
    operational: Region,
    functional: Region,
) -> RasterObject {
    let (op, func) = catalog::parts_of(label);
    RasterObject {
        id: id.to_string(),
        label: label.to_string(),
        class: catalog::class_of(label).unwrap_or(catalog::MISC_CLASS).to_string(),
        bbox,
        distance,
        blurred,
        parts: [(op.to_string(), operational), (func.to_string(), functional)],
    }
}

pub fn tables(tools: &[(&str, &str)], containers: &[(&str, &str)]) -> ScenarioTables {
    let mut t = ScenarioTables::default();
    for (k, v) in tools {
        t.tools.insert(k.to_string(), v.to_string());
    }
    for (k, v) in containers {
        t.containers.insert(k.to_string(), v.to_string());
    }
    t
}

/// A 1280x960 frame with the robot at its center.
pub fn frame(objects: Vec<RasterObject>, tables: ScenarioTables, ts: u64) -> SceneFrame {
    SceneFrame::new(ImageRef::new(format!("frame/unit/{ts}")), 1280, 960, ts)
        .with_viewpoint(Viewpoint {
            robot_px: (640.0, 480.0),
            pixels_per_unit: 30.0,
        })
        .with_raster(Raster { objects, tables })
}

/// Default parameters and a space over the default synthetic corpus.
pub fn default_space(seed: u64) -> (ConfigParams, RelationshipSpace) {
    let params = ConfigParams::default();
    let drafts = corpus::gen_corpus(&CorpusSpec::new(
        432,
        params.dims,
        catalog::CORPUS_CLASS_COUNT,
        params.subclusters,
        seed,
    ))
    .expect("valid corpus spec");
    let space = RelationshipSpace::build(corpus::drafts(&drafts), &params, seed)
        .expect("default corpus builds");
    (params, space)
}
