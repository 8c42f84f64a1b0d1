//! The catalog of constraint sets. Each set is a [`ConstraintSet`] trait
//! object; the free functions are the underlying projections.

pub mod convex;
pub mod nonconvex;

pub use convex::*;
pub use nonconvex::*;

use crate::dr::ConstraintSet;
use crate::error::{ensure_same_shape, Result};
use crate::matrix::DenseMatrix;

/// A single point.
#[derive(Debug, Clone)]
pub struct Singleton {
    point: DenseMatrix,
}

impl Singleton {
    pub fn new(point: DenseMatrix) -> Self {
        Singleton { point }
    }
}

impl ConstraintSet for Singleton {
    fn name(&self) -> &'static str {
        "singleton"
    }
    fn project(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        ensure_same_shape(self.point.shape(), x.shape())?;
        Ok(self.point.clone())
    }
    fn shape(&self) -> Option<(usize, usize)> {
        Some(self.point.shape())
    }
    fn certify(&self, candidate: &DenseMatrix) -> Option<bool> {
        Some(candidate == &self.point)
    }
}
