//! Console-driven recovery: RequestHuman blocks on a line of input.

use crate::config::ConfigParams;
use crate::geometry::Region;
use crate::perception::Perception;
use crate::planner::{run_closed_loop, EpisodeTrace, HumanAnswer, HumanResponder};
use crate::simulator::World;
use crate::space::RelationshipSpace;
use std::io::{BufRead, Write};

/// Empty input aborts; four integers are a pixel box; anything else is a
/// tool label.
pub fn parse_answer(line: &str) -> HumanAnswer {
    let line = line.trim();
    if line.is_empty() {
        return HumanAnswer::Abort;
    }
    let numbers: Vec<u32> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map_while(|t| t.parse().ok())
        .collect();
    let fields = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).count();
    match numbers[..] {
        [x0, y0, x1, y1] if fields == 4 => HumanAnswer::Region(Region::new(x0, y0, x1, y1)),
        _ => HumanAnswer::Label(line.to_string()),
    }
}

pub struct ConsoleResponder<R, W> {
    input: R,
    output: W,
}

impl<R: BufRead, W: Write> ConsoleResponder<R, W> {
    pub fn new(input: R, output: W) -> Self {
        Self { input, output }
    }
}

impl<R: BufRead, W: Write> HumanResponder for ConsoleResponder<R, W> {
    fn answer(&mut self, prompt: &str, world: &World) -> Option<HumanAnswer> {
        // console failures count as an abort rather than a silent hang
        let _ = writeln!(
            self.output,
            "[{} tick {}] {prompt}\n  tool label, or x_min y_min x_max y_max; empty line aborts",
            world.id, world.tick
        );
        let _ = self.output.flush();
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => Some(HumanAnswer::Abort),
            Ok(_) => Some(parse_answer(&line)),
        }
    }
}

/// A closed-loop episode whose RequestHuman commands are answered on the
/// console.
pub fn interactive_episode<R: BufRead, W: Write>(
    world: &mut World,
    space: &RelationshipSpace,
    params: &ConfigParams,
    perception: &dyn Perception,
    max_steps: usize,
    input: R,
    output: W,
) -> EpisodeTrace {
    let mut responder = ConsoleResponder::new(input, output);
    run_closed_loop(world, space, params, perception, max_steps, &mut responder)
}
