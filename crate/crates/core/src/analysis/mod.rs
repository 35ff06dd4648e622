//! Checks of the structural properties on computed eigenpairs: log-concavity,
//! the PDE satisfied by `w = -ln u`, the inf-convolution trial field, the
//! Brunn-Minkowski inequality along Minkowski combinations and boundary
//! positivity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigensolver::SolverError;
use crate::energy::EnergyError;
use crate::geometry::{GeometryError, Point};
use crate::mesh::MeshError;

pub mod bm;
pub mod concavity;
pub mod hopf;
pub mod infconv;
pub mod logpde;

pub use bm::{bm_sweep, BMReport, BMRow};
pub use concavity::{
    calibrated_tolerance, concavity_function, control_tolerance, log_concavity_check, log_concavity_check_field, midpoint_concavity_field, ConcavityReport,
};
pub use hopf::{hopf_check, HopfReport};
pub use infconv::{inf_convolution_trial, InfConvolution};
pub use logpde::{logpde_residual, LogPdeReport};

/// Fraction of `max u` below which `-ln u` is considered unreliable.
pub const U_FLOOR_FRACTION: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("u = {value:e} below floor {floor:e} at ({}, {}) inside the margin region; increase the margin", at[0], at[1])]
    FloorViolation { at: Point, value: f64, floor: f64 },
    #[error("no node qualifies for the residual test")]
    EmptyTestSet,
    #[error("inf-convolution is infinite at node {node}; refine the sample grid or the endpoint meshes")]
    GridTooCoarse { node: usize },
    #[error("exhaustive check allows at most {max} nodes, region has {got}")]
    TooManyNodes { max: usize, got: usize },
    #[error("invalid analysis input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}
