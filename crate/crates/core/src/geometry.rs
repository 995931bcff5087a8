//! Axis-aligned pixel boxes and the handful of box operations the planner needs.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Axis-aligned box in pixel coordinates. Edges are closed: a box with
/// `x_min == x_max` is a degenerate vertical segment, not an empty set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl Region {
    /// Builds a region, swapping coordinates if they arrive out of order.
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
        }
    }

    /// Full-image region for a `width` x `height` frame.
    pub fn frame(width: u32, height: u32) -> Self {
        Self::new(0, 0, width, height)
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width()) * u64::from(self.height())
    }

    pub fn is_well_formed(&self) -> bool {
        self.x_min <= self.x_max && self.y_min <= self.y_max
    }

    /// Integer center, rounded toward the origin.
    pub fn center(&self) -> (u32, u32) {
        (
            self.x_min + self.width() / 2,
            self.y_min + self.height() / 2,
        )
    }

    pub fn center_f64(&self) -> (f64, f64) {
        (
            (f64::from(self.x_min) + f64::from(self.x_max)) / 2.0,
            (f64::from(self.y_min) + f64::from(self.y_max)) / 2.0,
        )
    }

    /// Closed-interval overlap test; touching edges count as intersecting.
    pub fn intersects(&self, other: &Region) -> bool {
        self.x_min <= other.x_max
            && other.x_min <= self.x_max
            && self.y_min <= other.y_max
            && other.y_min <= self.y_max
    }

    pub fn contains(&self, other: &Region) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= f64::from(self.x_min)
            && x <= f64::from(self.x_max)
            && y >= f64::from(self.y_min)
            && y <= f64::from(self.y_max)
    }

    /// Smallest region covering both boxes.
    pub fn union(&self, other: &Region) -> Region {
        Region {
            x_min: self.x_min.min(other.x_min),
            y_min: self.y_min.min(other.y_min),
            x_max: self.x_max.max(other.x_max),
            y_max: self.y_max.max(other.y_max),
        }
    }

    /// Overlapping part of the two boxes, if any.
    pub fn intersection(&self, other: &Region) -> Option<Region> {
        if !self.intersects(other) {
            return None;
        }
        Some(Region {
            x_min: self.x_min.max(other.x_min),
            y_min: self.y_min.max(other.y_min),
            x_max: self.x_max.min(other.x_max),
            y_max: self.y_max.min(other.y_max),
        })
    }

    /// Clamps the box into a `width` x `height` frame.
    pub fn clip(&self, width: u32, height: u32) -> Region {
        Region {
            x_min: self.x_min.min(width),
            y_min: self.y_min.min(height),
            x_max: self.x_max.min(width),
            y_max: self.y_max.min(height),
        }
    }

    /// Grows each side by `fraction` of the box size (rounded up), clipped to the frame.
    pub fn pad(&self, fraction: f64, width: u32, height: u32) -> Region {
        let dx = (f64::from(self.width()) * fraction).ceil() as u32;
        let dy = (f64::from(self.height()) * fraction).ceil() as u32;
        Region {
            x_min: self.x_min.saturating_sub(dx),
            y_min: self.y_min.saturating_sub(dy),
            x_max: self.x_max.saturating_add(dx),
            y_max: self.y_max.saturating_add(dy),
        }
        .clip(width, height)
    }

    /// Square of half-side `half` around `(cx, cy)`, clipped to the frame.
    pub fn square_around(cx: u32, cy: u32, half: u32, width: u32, height: u32) -> Region {
        Region {
            x_min: cx.saturating_sub(half),
            y_min: cy.saturating_sub(half),
            x_max: cx.saturating_add(half),
            y_max: cy.saturating_add(half),
        }
        .clip(width, height)
    }

    /// Moves the box by `(dx, dy)`.
    pub fn offset(&self, dx: u32, dy: u32) -> Region {
        Region {
            x_min: self.x_min + dx,
            y_min: self.y_min + dy,
            x_max: self.x_max + dx,
            y_max: self.y_max + dy,
        }
    }

    /// Expresses the box relative to a view whose origin is `origin`, clipped
    /// to the view. Returns `None` when the box lies outside the view.
    pub fn relative_to(&self, view: &Region) -> Option<Region> {
        let inter = self.intersection(view)?;
        Some(Region {
            x_min: inter.x_min - view.x_min,
            y_min: inter.y_min - view.y_min,
            x_max: inter.x_max - view.x_min,
            y_max: inter.y_max - view.y_min,
        })
    }

    /// Splits the box horizontally: returns (lower half, upper half) in image
    /// coordinates, i.e. the half with larger `y` first.
    pub fn split_halves(&self) -> (Region, Region) {
        if self.height() < 2 {
            return (*self, *self);
        }
        let mid = self.y_min + self.height() / 2;
        let upper = Region {
            y_max: mid,
            ..*self
        };
        let lower = Region {
            y_min: mid,
            ..*self
        };
        (lower, upper)
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{},{}",
            self.x_min, self.y_min, self.x_max, self.y_max
        )
    }
}

/// Intersection over union. Degenerate boxes compare equal only to themselves.
pub fn iou(a: &Region, b: &Region) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = match a.intersection(b) {
        Some(r) => r.area() as f64,
        None => return 0.0,
    };
    let union = a.area() as f64 + b.area() as f64 - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}
