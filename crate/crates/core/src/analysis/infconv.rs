//! Trial field on a Minkowski combination built from the endpoint eigenfunctions.
//!
//! `w~(z) = inf { (1-t) w0(x) + t w1(y) : z = (1-t)x + t y }` with
//! `w_i = -ln u_i`, evaluated by a grid search over `x` followed by a compass
//! search, and `u~ = exp(-(w~ - min w~))`.

use std::sync::Arc;

use rayon::prelude::*;

use super::AnalysisError;
use crate::eigensolver::EigenResult;
use crate::energy::{rayleigh_quotient, EnergyParams, NodalField};
use crate::geometry::{contains, Point};
use crate::mesh::TriMesh;

#[derive(Debug, Clone)]
pub struct InfConvolution {
    /// Rayleigh quotient of `u~` at `eps = 0`.
    pub rq: f64,
    /// `u~`, with maximum 1.
    pub field: NodalField,
    pub t: f64,
    pub grid_n: usize,
}

fn log_u(u: &NodalField, x: Point) -> f64 {
    match u.eval(x) {
        Some(v) if v > 0.0 => v.ln(),
        _ => f64::NEG_INFINITY,
    }
}

/// Build `u~` on the nodes of `mesh_t`, which must mesh `(1-t) Omega0 + t Omega1`.
pub fn inf_convolution_trial(
    res0: &EigenResult,
    res1: &EigenResult,
    t: f64,
    mesh_t: &Arc<TriMesh>,
    grid_n: usize,
) -> Result<InfConvolution, AnalysisError> {
    if !(t > 0.0 && t < 1.0) {
        return Err(AnalysisError::InvalidInput(format!("t must lie in (0, 1), got {t}")));
    }
    if res0.p != res1.p {
        return Err(AnalysisError::InvalidInput("endpoint results use different p".into()));
    }
    if grid_n < 2 {
        return Err(AnalysisError::InvalidInput("grid_n must be at least 2".into()));
    }
    let (u0, u1) = (&res0.u, &res1.u);
    let omega0 = u0.mesh().domain();
    let (lo, hi) = omega0.bounding_box();
    let cell = [(hi[0] - lo[0]) / grid_n as f64, (hi[1] - lo[1]) / grid_n as f64];
    let grid: Vec<(Point, f64)> = (0..grid_n * grid_n)
        .map(|k| {
            let (i, j) = (k % grid_n, k / grid_n);
            [lo[0] + (i as f64 + 0.5) * cell[0], lo[1] + (j as f64 + 0.5) * cell[1]]
        })
        .filter(|&x| contains(omega0, x, 0.0))
        .map(|x| (x, log_u(u0, x)))
        .filter(|(_, l)| l.is_finite())
        .collect();

    let objective = |z: Point, x: Point, lu0: Option<f64>| -> f64 {
        let lu0 = lu0.unwrap_or_else(|| log_u(u0, x));
        if lu0 == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        let y = [(z[0] - (1.0 - t) * x[0]) / t, (z[1] - (1.0 - t) * x[1]) / t];
        (1.0 - t) * lu0 + t * log_u(u1, y)
    };

    let log_values: Vec<f64> = mesh_t
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(node, &z)| {
            if mesh_t.is_boundary(node) {
                return f64::NEG_INFINITY;
            }
            let (mut x, mut best) = grid
                .iter()
                .map(|&(x, l)| (x, objective(z, x, Some(l))))
                .fold(([0.0; 2], f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
            if best == f64::NEG_INFINITY {
                return best;
            }
            let mut step = cell;
            while step[0] > 1e-4 * cell[0] {
                let mut moved = false;
                for d in [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]] {
                    let trial = [x[0] + d[0] * step[0], x[1] + d[1] * step[1]];
                    let v = objective(z, trial, None);
                    if v > best {
                        best = v;
                        x = trial;
                        moved = true;
                    }
                }
                if !moved {
                    step = [0.5 * step[0], 0.5 * step[1]];
                }
            }
            best
        })
        .collect();

    if let Some(node) = (0..mesh_t.num_nodes()).find(|&i| !mesh_t.is_boundary(i) && log_values[i] == f64::NEG_INFINITY)
    {
        return Err(AnalysisError::GridTooCoarse { node });
    }
    let top = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = log_values.iter().map(|&l| if l.is_finite() { (l - top).exp() } else { 0.0 }).collect();
    let field = NodalField::new(Arc::clone(mesh_t), values)?;
    let rq = rayleigh_quotient(&field, &EnergyParams::new(res0.p, 0.0)?)?;
    Ok(InfConvolution { rq, field, t, grid_n })
}
