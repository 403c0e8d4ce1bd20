//! P1 finite elements on a triangulated disk and its boundary curve.
//!
//! Bulk fields live on all mesh vertices, boundary fields on the vertices of
//! the boundary loop (in loop order). The boundary operators are the periodic
//! 1-D P1 mass and stiffness matrices along the polyline, so `K_bdry` is the
//! discrete Laplace-Beltrami operator of the curve.

mod mesh;
mod operators;

pub use mesh::{gen_disk_mesh, DiskMesh};
pub use operators::{assemble, DiscreteOperators, Norms};

use thiserror::Error;

use crate::sparse::LinSolveError;

/// Triangles with area at or below this are rejected.
pub const DEGENERATE_AREA: f64 = 1e-14;
/// Relative residual required of every linear solve.
pub const SOLVE_TOL: f64 = 1e-12;
/// Tolerance on the mean of inputs to the Green operators.
pub const ZERO_MEAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiskFemError {
    #[error("triangle {triangle} is degenerate (signed area {area:e})")]
    DegenerateElement { triangle: usize, area: f64 },
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("input has mean {mean:e}, expected zero")]
    NotZeroMean { mean: f64 },
    #[error("field length {got} does not match {expected} degrees of freedom")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    LinSolve(#[from] LinSolveError),
}
