//! Affordance-aware closed-loop task planning.

pub mod affordance;
pub mod catalog;
pub mod config;
pub mod corpus;
pub mod ers;
pub mod exploration;
pub mod geometry;
pub mod harness;
pub mod media;
pub mod perception;
pub mod planner;
pub mod seeded;
pub mod simulator;
pub mod space;

#[cfg(test)]
pub(crate) mod testutil;
