//! First eigenpair of the Gaussian-weighted p-Laplacian
//!
//! `-div(exp(-|x|^2/2) |grad u|^(p-2) grad u) = lambda exp(-|x|^2/2) |u|^(p-2) u`
//! on a convex polygon with `u = 0` on the boundary, computed by minimising the
//! discrete Rayleigh quotient over P1 finite elements. The `analysis` module
//! checks log-concavity of the eigenfunction and the Brunn-Minkowski inequality
//! for the eigenvalue along Minkowski combinations of domains.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod eigensolver;
pub mod energy;
pub mod geometry;
pub mod mesh;
pub mod oracles;

pub use eigensolver::{solve_first_eigenpair, EigenResult, SolverConfig, SolverError};
pub use energy::{EnergyParams, NodalField};
pub use geometry::{ConvexPolygon, Point};
pub use mesh::{triangulate, TriMesh};
