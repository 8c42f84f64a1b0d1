//! Douglas–Rachford reflection methods for matrix completion.
//!
//! A completion problem is a feasibility problem over constraint sets whose
//! nearest-point projections are cheap. The [`dr`] module iterates the
//! Douglas–Rachford operator for two sets (or N sets through the product
//! space), [`sets`] holds the catalog of projections, and the driver modules
//! build complete experiments on top: [`solvers`] for generic completion and
//! minimum rank, [`protein`] for distance geometry, [`hadamard`] for
//! Hadamard-type searches.

pub mod dr;
pub mod error;
pub mod hadamard;
pub mod io;
pub mod matrix;
pub mod protein;
pub mod registry;
pub mod sets;
pub mod solvers;

pub use dr::{dr_solve, dr_step, product_embed, reflect, Certificate, ConstraintSet, DrConfig, DrRun, SharedSet, Status};
pub use error::{Error, Result};
pub use matrix::{frobenius_distance, random_symmetric_init, DenseMatrix, PartialMatrix};
