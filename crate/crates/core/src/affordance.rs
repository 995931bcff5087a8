//! Affordance vectors: fixed-length score profiles shared by instructions and tools.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Upper bound of every affordance score. Scores live in `[0, MAX_SCORE]`.
pub const MAX_SCORE: f64 = 10.0;

/// Number of scoring dimensions used by default (color complexity, glossiness,
/// shape design, symmetry, surface smoothness, material, handle design,
/// capacity, opening size, stability, transparency, material flexibility,
/// volume, height-to-width ratio, durability, maintenance difficulty, safety,
/// ease of use, portability).
pub const DEFAULT_DIMS: usize = 19;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AffordanceError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },
    #[error("score {value} at index {index} is outside [0, {MAX_SCORE}]")]
    OutOfRange { index: usize, value: f64 },
}

/// Affordance scores, one per dimension, each finite and in `[0, 10]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AffordanceVector(Vec<f64>);

impl AffordanceVector {
    /// Validates range and finiteness of every score.
    pub fn new(scores: Vec<f64>) -> Result<Self, AffordanceError> {
        for (index, &value) in scores.iter().enumerate() {
            if !value.is_finite() || !(0.0..=MAX_SCORE).contains(&value) {
                return Err(AffordanceError::OutOfRange { index, value });
            }
        }
        Ok(Self(scores))
    }

    /// Clamps every score into range; non-finite scores become the midpoint.
    pub fn clamped(scores: Vec<f64>) -> Self {
        Self(
            scores
                .into_iter()
                .map(|v| {
                    if v.is_finite() {
                        v.clamp(0.0, MAX_SCORE)
                    } else {
                        MAX_SCORE / 2.0
                    }
                })
                .collect(),
        )
    }

    pub fn uniform(dims: usize, value: f64) -> Self {
        Self::clamped(vec![value; dims])
    }

    pub fn dims(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn check_dims(&self, expected: usize) -> Result<(), AffordanceError> {
        if self.0.len() != expected {
            return Err(AffordanceError::Dimension {
                expected,
                actual: self.0.len(),
            });
        }
        Ok(())
    }

    /// Re-runs the range check, for vectors that arrived through deserialization.
    pub fn validate(&self) -> Result<(), AffordanceError> {
        Self::new(self.0.clone()).map(|_| ())
    }
}

/// Euclidean distance between two affordance vectors.
pub fn distance(u: &AffordanceVector, v: &AffordanceVector) -> Result<f64, AffordanceError> {
    if u.dims() != v.dims() {
        return Err(AffordanceError::Dimension {
            expected: u.dims(),
            actual: v.dims(),
        });
    }
    Ok(squared_distance(u.as_slice(), v.as_slice()).sqrt())
}

pub(crate) fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}
