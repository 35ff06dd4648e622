//! Regularized Gaussian p-Dirichlet energy, p-norm constraint and Rayleigh quotient.
//!
//! All integrals go through the mesh's shared mid-edge quadrature, so the
//! energy, the constraint and their gradients are consistent discrete
//! objects. The drift term of the weighted operator is never assembled: the
//! Gaussian factor in the quadrature weights carries it.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;
use crate::mesh::TriMesh;

/// Added under the power when `eps` is (numerically) zero and `p < 2`, where
/// `|grad u|^p` has an unbounded derivative at `grad u = 0`.
pub const DEGENERACY_FLOOR: f64 = 1e-14;

/// Largest boundary value accepted as zero.
pub const BOUNDARY_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnergyError {
    #[error("boundary node {node} carries {value:e}, expected 0")]
    BoundaryViolation { node: usize, value: f64 },
    #[error("field has (numerically) zero p-norm")]
    ZeroField,
    #[error("invalid energy parameters: {0}")]
    InvalidParams(String),
    #[error("field has {got} values, mesh has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("field value at node {0} is not finite")]
    NonFinite(usize),
}

/// How per-triangle contributions are summed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Fixed triangle order; bitwise reproducible.
    #[default]
    Sequential,
    /// Rayon fold/reduce; summation order depends on scheduling.
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub p: f64,
    pub eps: f64,
    pub reduction: Reduction,
}

impl EnergyParams {
    pub fn new(p: f64, eps: f64) -> Result<Self, EnergyError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(EnergyError::InvalidParams(format!("p must satisfy p > 1, got {p}")));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(EnergyError::InvalidParams(format!("eps must satisfy eps >= 0, got {eps}")));
        }
        Ok(Self {
            p,
            eps,
            reduction: Reduction::Sequential,
        })
    }

    pub fn with_reduction(mut self, reduction: Reduction) -> Self {
        self.reduction = reduction;
        self
    }

    /// The smoothing floor in effect for these parameters.
    pub fn floor(&self) -> f64 {
        if self.eps < DEGENERACY_FLOOR && self.p < 2.0 {
            DEGENERACY_FLOOR
        } else {
            0.0
        }
    }
}

/// Nodal values of a P1 function on a shared mesh.
#[derive(Debug, Clone)]
pub struct NodalField {
    mesh: Arc<TriMesh>,
    values: Vec<f64>,
}

impl NodalField {
    pub fn new(mesh: Arc<TriMesh>, values: Vec<f64>) -> Result<Self, EnergyError> {
        if values.len() != mesh.num_nodes() {
            return Err(EnergyError::LengthMismatch {
                expected: mesh.num_nodes(),
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EnergyError::NonFinite(i));
        }
        Ok(Self { mesh, values })
    }

    pub fn zeros(mesh: Arc<TriMesh>) -> Self {
        let n = mesh.num_nodes();
        Self {
            mesh,
            values: vec![0.0; n],
        }
    }

    /// Nodal interpolant of `f` with boundary nodes set to zero.
    pub fn from_fn<F: Fn(Point) -> f64>(mesh: Arc<TriMesh>, f: F) -> Self {
        let values = mesh
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| if mesh.is_boundary(i) { 0.0 } else { f(x) })
            .collect();
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<TriMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            mesh: Arc::clone(&self.mesh),
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// P1 value at `x`; `None` outside the mesh.
    pub fn eval(&self, x: Point) -> Option<f64> {
        self.mesh.interpolate(&self.values, x)
    }

    pub fn check_boundary(&self) -> Result<(), EnergyError> {
        for (i, &v) in self.values.iter().enumerate() {
            if self.mesh.is_boundary(i) && v.abs() > BOUNDARY_TOL {
                return Err(EnergyError::BoundaryViolation { node: i, value: v });
            }
        }
        Ok(())
    }
}

/// Energy, constraint and (optionally) their nodal gradients.
///
/// Gradients are raw partial derivatives; boundary entries are not masked.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub energy: f64,
    pub constraint: f64,
    pub energy_grad: Vec<f64>,
    pub constraint_grad: Vec<f64>,
}

impl Evaluation {
    pub fn rayleigh_quotient(&self) -> f64 {
        self.energy / self.constraint
    }

    /// Gradient of `E / N`, zero on boundary nodes.
    pub fn rq_gradient(&self, mesh: &TriMesh) -> Vec<f64> {
        let r = self.rayleigh_quotient();
        let inv = 1.0 / self.constraint;
        self.energy_grad
            .iter()
            .zip(&self.constraint_grad)
            .enumerate()
            .map(|(i, (ge, gn))| if mesh.is_boundary(i) { 0.0 } else { (ge - r * gn) * inv })
            .collect()
    }
}

/// Evaluate the discrete functionals on raw nodal values (no boundary check).
pub fn evaluate(mesh: &TriMesh, u: &[f64], params: &EnergyParams, gradients: bool) -> Evaluation {
    let n = mesh.num_nodes();
    let len = if gradients { 2 + 2 * n } else { 2 };
    let p = params.p;
    let eps = params.eps;
    let floor = params.floor();
    let floor_pow = floor.powf(0.5 * p);
    let tris = mesh.triangles();
    let elems = mesh.elements();

    let element = |t: usize, acc: &mut [f64]| {
        let tri = tris[t];
        let e = &elems[t];
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += u[tri[i]] * e.grads[i][0];
            g[1] += u[tri[i]] * e.grads[i][1];
        }
        let gg = g[0] * g[0] + g[1] * g[1];
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let uk = 0.5 * (u[a] + u[b]);
            let s = floor + eps * uk * uk + gg;
            let w = e.qweights[k];
            acc[0] += w * (s.powf(0.5 * p) - floor_pow);
            let au = uk.abs();
            acc[1] += w * au.powf(p);
            if gradients {
                let (ge, gn) = acc[2..].split_at_mut(n);
                if s > 0.0 {
                    let coef = w * p * s.powf(0.5 * p - 1.0);
                    for j in 0..3 {
                        ge[tri[j]] += coef * (g[0] * e.grads[j][0] + g[1] * e.grads[j][1]);
                    }
                    let mass = 0.5 * coef * eps * uk;
                    ge[a] += mass;
                    ge[b] += mass;
                }
                if au > 0.0 {
                    let cn = 0.5 * w * p * au.powf(p - 1.0) * uk.signum();
                    gn[a] += cn;
                    gn[b] += cn;
                }
            }
        }
    };

    let acc = match params.reduction {
        Reduction::Sequential => {
            let mut acc = vec![0.0; len];
            for t in 0..tris.len() {
                element(t, &mut acc);
            }
            acc
        }
        Reduction::Parallel => (0..tris.len())
            .into_par_iter()
            .fold(
                || vec![0.0; len],
                |mut acc, t| {
                    element(t, &mut acc);
                    acc
                },
            )
            .reduce(
                || vec![0.0; len],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            ),
    };

    let (energy, constraint) = (acc[0], acc[1]);
    let (energy_grad, constraint_grad) = if gradients {
        (acc[2..2 + n].to_vec(), acc[2 + n..].to_vec())
    } else {
        (Vec::new(), Vec::new())
    };
    Evaluation {
        energy,
        constraint,
        energy_grad,
        constraint_grad,
    }
}

/// `sum_k w_k (floor + eps u(q_k)^2 + |grad u|^2)^(p/2)`, shifted so that `u = 0` gives 0.
pub fn dirichlet_energy(u: &NodalField, params: &EnergyParams) -> Result<f64, EnergyError> {
    u.check_boundary()?;
    Ok(evaluate(&u.mesh, &u.values, params, false).energy)
}

/// `sum_k w_k |u(q_k)|^p`
pub fn p_norm_constraint(u: &NodalField, p: f64) -> f64 {
    let params = EnergyParams {
        p,
        eps: 0.0,
        reduction: Reduction::Sequential,
    };
    evaluate(&u.mesh, &u.values, &params, false).constraint
}

pub fn rayleigh_quotient(u: &NodalField, params: &EnergyParams) -> Result<f64, EnergyError> {
    u.check_boundary()?;
    let ev = evaluate(&u.mesh, &u.values, params, false);
    if ev.constraint < 1e-300 {
        return Err(EnergyError::ZeroField);
    }
    Ok(ev.rayleigh_quotient())
}

/// Partial derivatives of [`dirichlet_energy`]; boundary entries are zero.
pub fn energy_gradient(u: &NodalField, params: &EnergyParams) -> Result<NodalField, EnergyError> {
    u.check_boundary()?;
    let mut ev = evaluate(&u.mesh, &u.values, params, true);
    for (i, g) in ev.energy_grad.iter_mut().enumerate() {
        if u.mesh.is_boundary(i) {
            *g = 0.0;
        }
    }
    Ok(NodalField {
        mesh: Arc::clone(&u.mesh),
        values: ev.energy_grad,
    })
}

/// Partial derivatives of [`p_norm_constraint`]; boundary entries are zero.
pub fn constraint_gradient(u: &NodalField, p: f64) -> NodalField {
    let params = EnergyParams {
        p,
        eps: 0.0,
        reduction: Reduction::Sequential,
    };
    let mut ev = evaluate(&u.mesh, &u.values, &params, true);
    for (i, g) in ev.constraint_grad.iter_mut().enumerate() {
        if u.mesh.is_boundary(i) {
            *g = 0.0;
        }
    }
    NodalField {
        mesh: Arc::clone(&u.mesh),
        values: ev.constraint_grad,
    }
}

/// Rayleigh quotient and its gradient.
pub fn rq_gradient(u: &NodalField, params: &EnergyParams) -> Result<(f64, NodalField), EnergyError> {
    u.check_boundary()?;
    let ev = evaluate(&u.mesh, &u.values, params, true);
    if ev.constraint < 1e-300 {
        return Err(EnergyError::ZeroField);
    }
    let g = ev.rq_gradient(&u.mesh);
    Ok((
        ev.rayleigh_quotient(),
        NodalField {
            mesh: Arc::clone(&u.mesh),
            values: g,
        },
    ))
}
