use std::ops::Deref;

use crate::error::{Error, Result};
use crate::grid::Grid2D;

/// A saliency prediction with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap(Grid2D);

impl SaliencyMap {
    pub fn new(g: Grid2D) -> Result<Self> {
        if let Some(v) = g.as_slice().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("saliency value {v} outside [0, 1]")));
        }
        Ok(Self(g))
    }

    /// Min-max normalizes `g` into `[0, 1]`; a constant grid maps to zeros.
    pub fn normalized(g: &Grid2D) -> Self {
        Self(g.normalize_min_max())
    }

    /// Clamps every value into `[0, 1]`.
    pub fn clamped(g: &Grid2D) -> Self {
        Self(g.map(|v| v.clamp(0.0, 1.0)))
    }

    pub fn grid(&self) -> &Grid2D {
        &self.0
    }

    pub fn into_grid(self) -> Grid2D {
        self.0
    }
}

impl Deref for SaliencyMap {
    type Target = Grid2D;

    fn deref(&self) -> &Grid2D {
        &self.0
    }
}
