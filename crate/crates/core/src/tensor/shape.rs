use std::fmt;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// Highest rank a tensor may have in this engine.
pub const MAX_RANK: usize = 4;

/// Ordered list of non-negative extents. An empty list is a scalar.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self, EngineError> {
        if dims.len() > MAX_RANK {
            return Err(EngineError::Shape {
                rule: "rank must not exceed 4",
                dims: vec![dims],
            });
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn element_count(&self) -> usize {
        self.0.iter().product()
    }

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }

    /// Linear offset of a coordinate, or `None` when out of bounds.
    pub fn offset(&self, coord: &[usize]) -> Option<usize> {
        if coord.len() != self.0.len() || coord.iter().zip(&self.0).any(|(c, d)| c >= d) {
            return None;
        }
        Some(coord.iter().zip(self.strides()).map(|(c, s)| c * s).sum())
    }

    /// Coordinate of a linear offset.
    pub fn coord(&self, mut offset: usize) -> Vec<usize> {
        let mut coord = vec![0; self.0.len()];
        for (i, d) in self.0.iter().enumerate().rev() {
            if *d > 0 {
                coord[i] = offset % d;
                offset /= d;
            }
        }
        coord
    }
}

impl From<Shape> for Vec<usize> {
    fn from(s: Shape) -> Self {
        s.0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str("]")
    }
}
