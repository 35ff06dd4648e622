//! Independent reference solutions.
//!
//! None of these route through [`crate::energy`] or [`crate::eigensolver`]:
//! element geometry, quadrature and linear algebra are recomputed here so
//! that agreement with the main solver is evidence rather than tautology.

use thiserror::Error;

pub mod brute;
pub mod linear;
pub mod quadrature;
pub mod radial;

pub use brute::{brute_force_min, BruteForceResult};
pub use linear::{assemble_p2, linear_p2_eigensolve, LinearEigenpair, P2System};
pub use radial::{radial_annulus_solution, radial_residual_check, RadialSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("quadrature failure: {0}")]
    Quadrature(String),
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
    #[error("singular system: {0}")]
    SingularSystem(String),
    #[error("brute-force oracle needs at most {max} interior nodes, mesh has {got}")]
    TooManyNodes { max: usize, got: usize },
}
