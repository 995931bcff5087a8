//! Deterministic top-down 2D world. Objects live in world units; the robot
//! sees a fixed-size image centered on itself in which every observable
//! object appears as a pixel box. Observations carry a raster with the
//! ground truth so the mock perception backend can answer from it.

mod scenarios;

pub use scenarios::{
    hintless_scenarios, novel_scenarios, real_world_scenarios, reasoner_miss_scenarios,
    removal_scenarios, scripted_scenarios, unreachable_world,
};

use crate::catalog;
use crate::geometry::{iou, Region};
use crate::media::ImageRef;
use crate::perception::{Raster, RasterObject, ScenarioTables, SceneFrame, Viewpoint};
use crate::planner::{EpisodeTrace, MotionCommand};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use thiserror::Error;

pub const WORLD_SCHEMA: &str = "aide-world/1";
/// Objects marked blurred only look blurred beyond this distance.
pub const BLUR_DISTANCE: f64 = 4.0;
/// Success threshold for box overlap with ground truth.
pub const SUCCESS_IOU: f64 = 0.5;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("unsupported world schema {found:?}, expected {WORLD_SCHEMA:?}")]
    Schema { found: String },
    #[error("invalid world {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("malformed world document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
}

/// Axis-aligned rectangle in world units, y growing "down" as in images.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min: x_min.min(x_max),
            y_min: y_min.min(y_max),
            x_max: x_min.max(x_max),
            y_max: y_min.max(y_max),
        }
    }

    pub fn centered(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn contains(&self, other: &Rect) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    /// (lower, upper) halves, matching [`Region::split_halves`].
    pub fn split_halves(&self) -> (Rect, Rect) {
        let mid = (self.y_min + self.y_max) / 2.0;
        (
            Rect::new(self.x_min, mid, self.x_max, self.y_max),
            Rect::new(self.x_min, self.y_min, self.x_max, mid),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    Visible,
    /// Hard to recognize from afar.
    Blurred,
    /// Inside a container; observable once the container is open.
    Occluded,
    /// Not in the scene at all.
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldObject {
    pub id: String,
    pub label: String,
    pub world_box: Rect,
    pub affordance_class: String,
    pub visibility: Visibility,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container_id: Option<String>,
    /// (operational, functional) sub-rectangles; halves of the box when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub part_boxes: Option<(Rect, Rect)>,
    /// Containers only.
    #[serde(default)]
    pub open: bool,
}

impl WorldObject {
    pub fn new(id: &str, label: &str, world_box: Rect, visibility: Visibility) -> Self {
        Self {
            id: id.to_string(),
            label: label.to_string(),
            world_box,
            affordance_class: catalog::class_of(label)
                .unwrap_or(catalog::MISC_CLASS)
                .to_string(),
            visibility,
            container_id: None,
            part_boxes: None,
            open: false,
        }
    }

    pub fn parts(&self) -> (Rect, Rect) {
        self.part_boxes
            .unwrap_or_else(|| self.world_box.split_halves())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    /// Radians; the camera is top-down, so heading does not affect views.
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Clear,
    Ambiguous,
    Unrecognizable,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldEvent {
    /// Takes an object out of the scene at the given tick.
    Remove { tick: u64, object: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub schema: String,
    pub id: String,
    pub category: Category,
    #[serde(default)]
    pub tags: Vec<String>,
    /// The instruction currently being executed.
    pub task: String,
    pub objects: Vec<WorldObject>,
    pub robot: Pose,
    pub frame_size: (u32, u32),
    pub pixels_per_unit: f64,
    /// Distance covered by one Approach tick.
    pub speed: f64,
    pub near_radius: f64,
    /// The robot cannot leave this rectangle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Rect>,
    pub tables: ScenarioTables,
    /// Instruction to required object id.
    pub gt: BTreeMap<String, String>,
    /// Instruction to the tool label a human would name when asked.
    #[serde(default)]
    pub human_hints: BTreeMap<String, String>,
    #[serde(default)]
    pub events: Vec<WorldEvent>,
    #[serde(default)]
    pub tick: u64,
    /// Object the robot last manipulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manipulated: Option<String>,
    /// Set when a Manipulate hit the required object's parts.
    #[serde(default)]
    pub success: bool,
}

/// What applying a command did.
#[derive(Debug, Clone, PartialEq)]
pub struct ApplyReport {
    pub warning: Option<String>,
}

/// Per-metric outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessFlags {
    pub tool: bool,
    pub operational: bool,
    pub functional: bool,
    pub whole: bool,
    /// Only for worlds whose required object starts hidden.
    pub exploration: Option<bool>,
}

impl World {
    pub fn new(id: &str, category: Category, task: &str) -> Self {
        Self {
            schema: WORLD_SCHEMA.to_string(),
            id: id.to_string(),
            category,
            tags: Vec::new(),
            task: task.to_string(),
            objects: Vec::new(),
            robot: Pose {
                x: 0.0,
                y: 0.0,
                heading: 0.0,
            },
            frame_size: (1280, 960),
            pixels_per_unit: 30.0,
            speed: 0.5,
            near_radius: 1.0,
            bounds: None,
            tables: ScenarioTables::default(),
            gt: BTreeMap::new(),
            human_hints: BTreeMap::new(),
            events: Vec::new(),
            tick: 0,
            manipulated: None,
            success: false,
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |reason: String| WorldError::Invalid {
            id: self.id.clone(),
            reason,
        };
        if self.schema != WORLD_SCHEMA {
            return Err(WorldError::Schema {
                found: self.schema.clone(),
            });
        }
        if self.frame_size.0 == 0 || self.frame_size.1 == 0 || self.pixels_per_unit <= 0.0 {
            return Err(bad("frame size and scale must be positive".into()));
        }
        let mut ids = HashSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(bad(format!("duplicate object id {}", o.id)));
            }
        }
        for o in &self.objects {
            if o.visibility == Visibility::Occluded {
                match &o.container_id {
                    Some(c) if ids.contains(c.as_str()) => {}
                    _ => return Err(bad(format!("occluded {} lacks a container", o.id))),
                }
            }
            if let Some((op, func)) = &o.part_boxes {
                if !o.world_box.contains(op) || !o.world_box.contains(func) {
                    return Err(bad(format!("parts of {} leave its box", o.id)));
                }
            }
        }
        for (instruction, target) in &self.gt {
            if !ids.contains(target.as_str()) {
                return Err(bad(format!("{instruction:?} requires unknown object {target}")));
            }
        }
        if !self.gt.contains_key(&self.task) {
            return Err(bad(format!("no ground truth for task {:?}", self.task)));
        }
        Ok(())
    }

    pub fn object(&self, id: &str) -> Option<&WorldObject> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// The object the current task requires.
    pub fn target(&self) -> Option<&WorldObject> {
        self.gt.get(&self.task).and_then(|id| self.object(id))
    }

    /// Container holding the current task's object, if any.
    pub fn target_container(&self) -> Option<&WorldObject> {
        self.target()
            .and_then(|t| t.container_id.as_deref())
            .and_then(|c| self.object(c))
    }

    pub fn is_observable(&self, obj: &WorldObject) -> bool {
        match obj.visibility {
            Visibility::Visible | Visibility::Blurred => true,
            Visibility::Absent => false,
            Visibility::Occluded => obj
                .container_id
                .as_deref()
                .and_then(|c| self.object(c))
                .is_some_and(|c| c.open),
        }
    }

    pub fn distance_to(&self, r: &Rect) -> f64 {
        let (cx, cy) = r.center();
        (cx - self.robot.x).hypot(cy - self.robot.y)
    }

    fn robot_px(&self) -> (f64, f64) {
        (
            f64::from(self.frame_size.0) / 2.0,
            f64::from(self.frame_size.1) / 2.0,
        )
    }

    /// Pixel box of a world rectangle in the current view, clipped; `None`
    /// when it is out of view.
    pub fn project(&self, r: &Rect) -> Option<Region> {
        let (w, h) = (f64::from(self.frame_size.0), f64::from(self.frame_size.1));
        let (ox, oy) = self.robot_px();
        let px = |x: f64| ox + (x - self.robot.x) * self.pixels_per_unit;
        let py = |y: f64| oy + (y - self.robot.y) * self.pixels_per_unit;
        let (x0, x1) = (px(r.x_min).round(), px(r.x_max).round());
        let (y0, y1) = (py(r.y_min).round(), py(r.y_max).round());
        if x1 < 0.0 || y1 < 0.0 || x0 > w || y0 > h {
            return None;
        }
        let c = |v: f64, hi: f64| v.clamp(0.0, hi) as u32;
        Some(Region::new(c(x0, w), c(y0, h), c(x1, w), c(y1, h)))
    }

    /// World point under a pixel of the current view.
    pub fn unproject(&self, px: f64, py: f64) -> (f64, f64) {
        let (ox, oy) = self.robot_px();
        (
            self.robot.x + (px - ox) / self.pixels_per_unit,
            self.robot.y + (py - oy) / self.pixels_per_unit,
        )
    }

    /// Projected box of an observable object.
    pub fn projected_box(&self, id: &str) -> Option<Region> {
        let o = self.object(id)?;
        if !self.is_observable(o) {
            return None;
        }
        self.project(&o.world_box)
    }

    /// Projected (operational, functional) part boxes of an observable object.
    pub fn projected_parts(&self, id: &str) -> Option<(Region, Region)> {
        let o = self.object(id)?;
        if !self.is_observable(o) {
            return None;
        }
        let (op, func) = o.parts();
        Some((self.project(&op)?, self.project(&func)?))
    }

    fn raster_object(&self, o: &WorldObject) -> Option<RasterObject> {
        let bbox = self.project(&o.world_box)?;
        let (op, func) = o.parts();
        let (lower, upper) = bbox.split_halves();
        let (op_name, fn_name) = catalog::parts_of(&o.label);
        let distance = self.distance_to(&o.world_box);
        Some(RasterObject {
            id: o.id.clone(),
            label: o.label.clone(),
            class: o.affordance_class.clone(),
            bbox,
            distance,
            blurred: o.visibility == Visibility::Blurred && distance > BLUR_DISTANCE,
            parts: [
                (op_name.to_string(), self.project(&op).unwrap_or(lower)),
                (fn_name.to_string(), self.project(&func).unwrap_or(upper)),
            ],
        })
    }

    /// Renders the current view.
    pub fn observe(&self) -> SceneFrame {
        let objects = self
            .objects
            .iter()
            .filter(|o| self.is_observable(o))
            .filter_map(|o| self.raster_object(o))
            .collect();
        SceneFrame::new(
            ImageRef::new(format!("frame/{}/{}", self.id, self.tick)),
            self.frame_size.0,
            self.frame_size.1,
            self.tick * 100,
        )
        .with_viewpoint(Viewpoint {
            robot_px: self.robot_px(),
            pixels_per_unit: self.pixels_per_unit,
        })
        .with_raster(Raster {
            objects,
            tables: self.tables.clone(),
        })
    }

    fn clamp_to_bounds(&mut self) {
        if let Some(b) = &self.bounds {
            self.robot.x = self.robot.x.clamp(b.x_min, b.x_max);
            self.robot.y = self.robot.y.clamp(b.y_min, b.y_max);
        }
    }

    fn observable_under(&self, region: &Region) -> Option<&WorldObject> {
        self.objects
            .iter()
            .filter(|o| self.is_observable(o))
            .filter_map(|o| Some((iou(&self.project(&o.world_box)?, region), o)))
            .filter(|(s, _)| *s > 0.0)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, o)| o)
    }

    /// Executes one command and advances the clock by one tick.
    pub fn apply(&mut self, command: &MotionCommand) -> ApplyReport {
        let warning = match command {
            MotionCommand::Approach { region } => {
                let (cx, cy) = region.center_f64();
                let (tx, ty) = self.unproject(cx, cy);
                let (dx, dy) = (tx - self.robot.x, ty - self.robot.y);
                let dist = dx.hypot(dy);
                if dist > 0.0 {
                    let step = self.speed.min(dist);
                    self.robot.x += dx / dist * step;
                    self.robot.y += dy / dist * step;
                    self.robot.heading = dy.atan2(dx);
                }
                self.clamp_to_bounds();
                None
            }
            MotionCommand::Reformulate { subgoal, key_region } => self.open(subgoal, key_region),
            MotionCommand::Manipulate {
                operational,
                functional,
            } => {
                let hit = self
                    .observable_under(&operational.union(functional))
                    .map(|o| o.id.clone());
                self.success = match (&hit, self.target()) {
                    (Some(h), Some(t)) if *h == t.id => self
                        .projected_parts(h)
                        .is_some_and(|(op, func)| {
                            iou(&op, operational) >= SUCCESS_IOU
                                && iou(&func, functional) >= SUCCESS_IOU
                        }),
                    _ => false,
                };
                self.manipulated = hit;
                None
            }
            MotionCommand::RequestHuman { .. } | MotionCommand::Idle => None,
        };
        self.tick += 1;
        let tick = self.tick;
        let removals: Vec<String> = self
            .events
            .iter()
            .filter_map(|e| match e {
                WorldEvent::Remove { tick: t, object } if *t == tick => Some(object.clone()),
                _ => None,
            })
            .collect();
        for id in removals {
            if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                o.visibility = Visibility::Absent;
            }
        }
        ApplyReport { warning }
    }

    /// Opens the container named by an "open the X" subgoal when it lies in
    /// the key region and the robot is near it.
    fn open(&mut self, subgoal: &str, key_region: &Region) -> Option<String> {
        let Some(label) = subgoal.strip_prefix("open the ").map(str::trim) else {
            return Some(format!("cannot execute subgoal {subgoal:?}"));
        };
        let candidate = self
            .objects
            .iter()
            .filter(|o| o.label == label && self.is_observable(o))
            .filter(|o| {
                self.project(&o.world_box)
                    .is_some_and(|b| b.intersects(key_region))
            })
            .min_by(|a, b| {
                self.distance_to(&a.world_box)
                    .total_cmp(&self.distance_to(&b.world_box))
            })
            .map(|o| (o.id.clone(), self.distance_to(&o.world_box)));
        match candidate {
            // one pixel of slack: the planner judges reach from rounded boxes
            Some((id, d)) if d <= self.near_radius + 1.0 / self.pixels_per_unit => {
                if let Some(o) = self.objects.iter_mut().find(|o| o.id == id) {
                    o.open = true;
                }
                None
            }
            Some(_) => Some(format!("{label} is out of reach")),
            None => Some(format!("no {label} in the key region")),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("worlds serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let schema = value
            .get("schema")
            .and_then(|s| s.as_str())
            .unwrap_or_default();
        if schema != WORLD_SCHEMA {
            return Err(WorldError::Schema {
                found: schema.to_string(),
            });
        }
        let world: World = serde_json::from_value(value)?;
        world.validate()?;
        Ok(world)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|source| WorldError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json()).map_err(|source| WorldError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Copy of the world set up to execute `instruction`.
    pub fn with_task(&self, instruction: &str) -> World {
        World {
            task: instruction.to_string(),
            ..self.clone()
        }
    }
}

/// Every `*.json` world in a directory, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<World>, WorldError> {
    let io = |source| WorldError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| World::load(p)).collect()
}

/// Writes each world to `<dir>/<id>.json`.
pub fn export(dir: &Path, worlds: &[World]) -> Result<(), WorldError> {
    std::fs::create_dir_all(dir).map_err(|source| WorldError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for w in worlds {
        w.save(&dir.join(format!("{}.json", w.id)))?;
    }
    Ok(())
}

/// Scores an episode against the world's ground truth. Part and tool boxes
/// are compared in the final view, which is where Manipulate was decided.
pub fn check_success(trace: &EpisodeTrace, world: &World) -> SuccessFlags {
    let target = world.target();
    let grounding = trace.final_grounding.as_ref();
    let target_box = target.and_then(|t| world.projected_box(&t.id));
    let target_parts = target.and_then(|t| world.projected_parts(&t.id));
    let tool = match (grounding, target_box) {
        (Some(g), Some(b)) => iou(&g.tool_region, &b) >= SUCCESS_IOU,
        _ => false,
    };
    let (operational, functional) = match (grounding, target_parts) {
        (Some(g), Some((op, func))) => (
            iou(&g.operational_region, &op) >= SUCCESS_IOU,
            iou(&g.functional_region, &func) >= SUCCESS_IOU,
        ),
        _ => (false, false),
    };
    let hidden = target.is_some_and(|t| t.container_id.is_some());
    SuccessFlags {
        tool,
        operational,
        functional,
        whole: tool && operational && functional && trace.completed(),
        exploration: hidden.then(|| trace.events.iter().any(|e| e.container_hit == Some(true))),
    }
}
