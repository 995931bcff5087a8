//! The scripted scenario library. The robot starts at the origin in every
//! world; the view spans about 21 units left and right and 16 up and down.

use super::{Category, Rect, Visibility, World, WorldEvent, WorldObject};
use crate::catalog;

const TOOL_W: f64 = 1.0;
const TOOL_H: f64 = 1.6;
const CONTAINER_SIZE: f64 = 3.0;
const JUNK_SIZE: f64 = 1.0;

/// Tool box with a narrow grasp part below and a full-width working part on top.
fn tool_object(id: &str, label: &str, cx: f64, cy: f64, visibility: Visibility) -> WorldObject {
    let b = Rect::centered(cx, cy, TOOL_W, TOOL_H);
    let split = b.y_min + 0.4 * TOOL_H;
    let operational = Rect::new(b.x_min + 0.2, split, b.x_max - 0.2, b.y_max);
    let functional = Rect::new(b.x_min, b.y_min, b.x_max, split);
    WorldObject {
        part_boxes: Some((operational, functional)),
        ..WorldObject::new(id, label, b, visibility)
    }
}

struct Builder {
    world: World,
    junk: usize,
}

impl Builder {
    fn new(id: &str, category: Category, instruction: &str) -> Self {
        Self {
            world: World::new(id, category, instruction),
            junk: 0,
        }
    }

    /// Registers the reasoner's tool and container answers for the task.
    fn tables(mut self, tool: &str) -> Self {
        let task = self.world.task.clone();
        self.world.tables.tools.insert(task.clone(), tool.to_string());
        if let Some(container) = catalog::class_of(tool)
            .and_then(catalog::class)
            .and_then(|c| c.container)
        {
            self.world.tables.containers.insert(task, container.to_string());
        }
        self
    }

    fn target(mut self, label: &str, cx: f64, cy: f64, visibility: Visibility) -> Self {
        let task = self.world.task.clone();
        self.world.gt.insert(task, "target".into());
        self.world
            .objects
            .push(tool_object("target", label, cx, cy, visibility));
        self.tables(label)
    }

    fn tool(mut self, id: &str, label: &str, cx: f64, cy: f64, visibility: Visibility) -> Self {
        self.world
            .objects
            .push(tool_object(id, label, cx, cy, visibility));
        self
    }

    fn container(mut self, id: &str, label: &str, cx: f64, cy: f64) -> Self {
        self.world.objects.push(WorldObject::new(
            id,
            label,
            Rect::centered(cx, cy, CONTAINER_SIZE, CONTAINER_SIZE),
            Visibility::Visible,
        ));
        self
    }

    /// Required tool hidden in a closed container centered at (cx, cy).
    fn hidden_target(self, label: &str, container: &str, cx: f64, cy: f64) -> Self {
        let mut b = self
            .container("holder", container, cx, cy)
            .target(label, cx + 0.4, cy + 0.3, Visibility::Occluded);
        if let Some(t) = b.world.objects.iter_mut().find(|o| o.id == "target") {
            t.container_id = Some("holder".into());
        }
        b
    }

    fn junk(mut self, label: &str, cx: f64, cy: f64) -> Self {
        self.junk += 1;
        let id = format!("junk{}", self.junk);
        self.world.objects.push(WorldObject::new(
            &id,
            label,
            Rect::centered(cx, cy, JUNK_SIZE, JUNK_SIZE),
            Visibility::Visible,
        ));
        self
    }

    /// Five clutter objects hugging the robot, outranking anything far away.
    fn clutter_ring(self) -> Self {
        self.junk("book", -1.3, 0.0)
            .junk("phone", 0.0, -1.3)
            .junk("remote", 0.0, 1.3)
            .junk("keys", -1.0, 1.0)
            .junk("wallet", 1.0, -1.0)
    }

    fn tag(mut self, tag: &str) -> Self {
        self.world.tags.push(tag.to_string());
        self
    }

    fn build(self) -> World {
        self.world.validate().expect("scripted worlds are valid");
        self.world
    }
}

fn clear(id: &str, instruction: &str, label: &str, at: (f64, f64), junk: [(&str, f64, f64); 2]) -> Builder {
    junk.iter().fold(
        Builder::new(id, Category::Clear, instruction).target(label, at.0, at.1, Visibility::Visible),
        |b, (l, x, y)| b.junk(l, *x, *y),
    )
}

/// A nearby target with two same-class decoys far away on the other side.
fn ambiguous(id: &str, instruction: &str, label: &str, at: (f64, f64), decoys: [(&str, f64, f64); 2]) -> Builder {
    let b = Builder::new(id, Category::Ambiguous, instruction)
        .target(label, at.0, at.1, Visibility::Visible)
        .junk("plant", at.0 - 2.5, at.1 + 3.0)
        .junk("clock", -at.0, -at.1 + 3.5);
    decoys.iter().enumerate().fold(b, |b, (i, (l, x, y))| {
        b.tool(&format!("decoy{i}"), l, *x, *y, Visibility::Blurred)
    })
}

/// A blurred target far to one side, surrounded by clutter, while clutter
/// near the robot outranks it.
fn unrecognizable(id: &str, instruction: &str, label: &str, at: (f64, f64)) -> Builder {
    let side = at.0.signum();
    Builder::new(id, Category::Unrecognizable, instruction)
        .target(label, at.0, at.1, Visibility::Blurred)
        .clutter_ring()
        .junk("vase", at.0, at.1 + 2.3)
        .junk("shoe", at.0 - 1.8 * side, at.1 - 1.9)
        .junk("clock", at.0 + 1.5 * side, at.1 - 2.2)
        .junk("laptop", -side * 14.0, 9.0)
        .junk("plant", -side * 11.0, -10.0)
}

/// The target sits in a closed container; another container distracts.
fn absent(id: &str, instruction: &str, label: &str, container: &str, at: (f64, f64), other: &str) -> Builder {
    Builder::new(id, Category::Absent, instruction)
        .hidden_target(label, container, at.0, at.1)
        .container("other", other, -at.0, -at.1 + 1.0)
        .junk("book", at.1 + 1.0, at.0 - 2.0)
        .junk("shoe", -2.0, 4.0)
}

/// Worlds for the six everyday instructions used in physical trials.
pub fn real_world_scenarios() -> Vec<World> {
    vec![
        clear("rw-thirsty", "I am thirsty", "cup", (3.0, -2.0), [("book", -2.0, 3.0), ("phone", 4.0, 3.5)])
            .tag("real-world")
            .build(),
        clear("rw-dust", "I want to clean the dust", "brush", (-3.0, -2.0), [("plant", 2.0, 2.5), ("shoe", -5.0, 2.0)])
            .tag("real-world")
            .build(),
        ambiguous("rw-walnuts", "I want to crack walnuts", "hammer", (3.0, 1.0), [("mallet", -11.0, -2.0), ("wrench", -10.0, 6.0)])
            .tag("real-world")
            .build(),
        absent("rw-cold", "I want something cold to drink", "coke", "fridge", (5.0, 0.0), "cabinet")
            .tag("real-world")
            .build(),
        absent("rw-boxes", "I want to close up delivery boxes tightly", "tape", "drawer", (-4.0, 2.0), "toolbox")
            .tag("real-world")
            .build(),
        unrecognizable("rw-waist", "I want to support my waist while sitting", "pillow", (16.0, 5.0))
            .tag("real-world")
            .build(),
    ]
}

/// Instructions whose tool classes the default corpus never covers.
pub fn novel_scenarios() -> Vec<World> {
    vec![
        clear("novel-note", "I want to jot down a note", "pen", (2.0, 3.0), [("keys", -3.0, -2.0), ("vase", 4.0, -3.0)])
            .tag("novel")
            .build(),
        clear("novel-dark", "it is too dark to see", "flashlight", (-3.0, 1.0), [("book", 3.0, 2.0), ("remote", -1.0, -4.0)])
            .tag("novel")
            .build(),
        absent("novel-mark", "I need to mark this box", "marker", "drawer", (-4.0, -2.0), "closet")
            .tag("novel")
            .build(),
    ]
}

/// The end-to-end suite: at least six worlds per category, including the
/// real-world analogs and the novel-task worlds.
pub fn scripted_scenarios() -> Vec<World> {
    let mut worlds = vec![
        clear("clear-cup", "my throat feels dry", "cup", (3.0, 1.0), [("book", -2.0, 3.0), ("phone", 4.0, -4.0)]).build(),
        clear("clear-broom", "the floor needs sweeping", "broom", (-3.0, 2.0), [("shoe", 2.0, 2.0), ("plant", -5.0, -3.0)]).build(),
        clear("clear-hammer", "this nail sticks out", "hammer", (2.0, -3.0), [("keys", -3.0, -1.0), ("clock", 5.0, 3.0)]).build(),
        clear("clear-knife", "I want to slice bread", "knife", (-2.0, -3.0), [("vase", 3.0, 3.0), ("remote", -5.0, 2.0)]).build(),
        clear("clear-tape", "seal this envelope", "tape", (4.0, 0.0), [("laptop", 0.0, 4.0), ("wallet", -4.0, -2.0)]).build(),
        clear("clear-kettle", "boil some water for me", "kettle", (0.0, -4.0), [("book", 3.0, 2.0), ("shoe", -3.0, 3.0)]).build(),
        ambiguous("amb-mug", "I would like some warm tea", "mug", (3.0, 0.0), [("glass", -11.0, 2.0), ("bottle", -10.0, -5.0)]).build(),
        ambiguous("amb-soda", "something fizzy would be great", "soda", (-3.0, 1.0), [("juice", 11.0, 1.0), ("milk", 10.0, -6.0)]).build(),
        ambiguous("amb-cushion", "I need something soft to lean on", "cushion", (0.0, 3.0), [("pillow", 0.0, -12.0), ("towel", 8.0, -10.0)]).build(),
        ambiguous("amb-scissors", "cut the paper in half", "scissors", (2.0, 2.0), [("knife", -12.0, -3.0), ("cutter", -9.0, -8.0)]).build(),
        ambiguous("amb-glue", "fix the torn page", "glue", (-2.0, -2.0), [("tape", 12.0, 2.0), ("clip", 9.0, 8.0)]).build(),
        ambiguous("amb-dryer", "my hair is still wet", "hair_dryer", (3.0, -1.0), [("heater", -12.0, 0.0), ("iron", -9.0, 7.0)]).build(),
        unrecognizable("unr-mallet", "help me crush these nuts", "mallet", (17.0, 0.0)).build(),
        unrecognizable("unr-duster", "there are crumbs everywhere", "duster", (-17.0, 3.0)).build(),
        unrecognizable("unr-bowl", "I need a sip of water", "bowl", (16.0, -6.0)).build(),
        unrecognizable("unr-saw", "I need to split the apple", "saw", (-16.0, -5.0)).build(),
        unrecognizable("unr-blanket", "make the seat comfier", "blanket", (17.0, 4.0)).build(),
        unrecognizable("unr-lighter", "I want to warm up my hands", "lighter", (-17.0, -2.0)).build(),
        absent("abs-soda", "I crave a chilled soda", "soda", "fridge", (4.0, 2.0), "cabinet").build(),
        absent("abs-stapler", "keep these papers together", "stapler", "drawer", (-4.0, 1.0), "closet").build(),
        absent("abs-wrench", "I need to pound something", "wrench", "toolbox", (3.0, -3.0), "fridge").build(),
        absent("abs-sponge", "wipe up this mess", "sponge", "cabinet", (-3.0, -4.0), "drawer").build(),
        absent("abs-backrest", "my back hurts on this chair", "backrest", "closet", (5.0, -1.0), "toolbox").build(),
        absent("abs-scissors", "trim this loose string", "scissors", "drawer", (-4.0, 3.0), "fridge").build(),
    ];
    worlds.extend(real_world_scenarios());
    worlds.extend(novel_scenarios());
    worlds
}

/// Worlds whose required tool disappears at tick 3, before the robot can
/// reach it. No other object of the tool's class is present.
pub fn removal_scenarios() -> Vec<World> {
    let specs = [
        ("rm-cup", "my throat feels dry", "cup", (6.0, 2.0)),
        ("rm-hammer", "this nail sticks out", "hammer", (-6.0, 3.0)),
        ("rm-brush", "the table is dusty", "brush", (5.0, -4.0)),
        ("rm-knife", "I want to slice bread", "knife", (-5.0, -4.0)),
        ("rm-tape", "seal this envelope", "tape", (7.0, 0.0)),
        ("rm-kettle", "boil some water for me", "kettle", (0.0, -7.0)),
    ];
    specs
        .iter()
        .map(|(id, instruction, label, at)| {
            let mut b = clear(id, instruction, label, *at, [("book", -2.0, 3.0), ("clock", 3.0, 4.0)])
                .tag("removal");
            b.world.events.push(WorldEvent::Remove {
                tick: 3,
                object: "target".into(),
            });
            b.build()
        })
        .collect()
}

/// Novel tasks the reasoner has no answer for; a human can name the tool.
pub fn reasoner_miss_scenarios() -> Vec<World> {
    let specs = [
        ("miss-sign", "sign this form for me", "pencil", (3.0, 1.0)),
        ("miss-sketch", "let me sketch an idea", "crayon", (-2.0, 3.0)),
        ("miss-board", "write my name on the board", "chalk", (2.0, -3.0)),
        ("miss-power", "the power went out", "candle", (-3.0, -2.0)),
        ("miss-corner", "light up the corner", "lamp", (4.0, 0.0)),
        ("miss-bed", "I need to look under the bed", "torch", (0.0, 4.0)),
    ];
    specs
        .iter()
        .map(|(id, instruction, label, at)| {
            let mut b = clear(id, instruction, label, *at, [("book", -4.0, 1.0), ("shoe", 2.0, 5.0)])
                .tag("reasoner-miss");
            b.world.tables = Default::default();
            b.world
                .human_hints
                .insert(instruction.to_string(), label.to_string());
            b.build()
        })
        .collect()
}

/// The reasoner-miss worlds with nobody around to answer.
pub fn hintless_scenarios() -> Vec<World> {
    reasoner_miss_scenarios()
        .into_iter()
        .map(|mut w| {
            w.human_hints.clear();
            w.id = w.id.replace("miss-", "hintless-");
            w.tags = vec!["hintless".into()];
            w
        })
        .collect()
}

/// A visible tool beyond a wall the robot cannot pass; nothing to open.
pub fn unreachable_world() -> World {
    let mut b = clear("unreachable", "this nail sticks out", "hammer", (12.0, 0.0), [("book", -3.0, 2.0), ("plant", 2.0, 4.0)])
        .tag("unreachable");
    b.world.bounds = Some(Rect::new(-5.0, -5.0, 5.0, 5.0));
    b.build()
}
