//! Monotone schemes for parabolic Hamilton-Jacobi-Bellman equations with
//! strong Dirichlet boundary conditions on boxes in one or two dimensions.

pub mod error;
pub mod grid;
pub mod harness;
pub mod problem;
pub mod scheme;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{GridFunction, NodeKind, Point, SpaceTimeGrid};
pub use problem::{builtin_problem, ControlProblem};
