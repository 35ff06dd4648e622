//! Weak residual of the equation satisfied by `w = -ln u`:
//! `Delta_{p,gamma} w = lambda + (p-1) |grad w|^p`.
//!
//! For an interior hat function `phi_i` the residual is
//! `int |grad w|^(p-2) grad w . grad phi_i dgamma + int (lambda + (p-1)|grad w|^p) phi_i dgamma`,
//! normalised by `int phi_i dgamma`. Only hat functions supported in the
//! margin region, with `u` above the floor and `|grad w|` above the gradient
//! floor on the whole support, are tested.

use serde::{Deserialize, Serialize};

use super::{AnalysisError, U_FLOOR_FRACTION};
use crate::eigensolver::EigenResult;
use crate::energy::NodalField;
use crate::geometry::{contains, norm};
use crate::mesh::Element;

/// Gradient floor relative to `max |grad w|` over the margin region.
pub const GRADIENT_FLOOR_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogPdeReport {
    /// Max normalised residual over tested nodes.
    pub residual: f64,
    /// Mean normalised residual over tested nodes.
    pub mean: f64,
    pub n_nodes: usize,
    pub worst_node: usize,
    pub margin: f64,
    pub gradient_floor: f64,
}

pub fn logpde_residual(res: &EigenResult, margin: f64) -> Result<LogPdeReport, AnalysisError> {
    logpde_residual_field(&res.u, res.lambda, res.p, margin)
}

/// Residual for an arbitrary positive field and eigenvalue.
pub fn logpde_residual_field(u: &NodalField, lambda: f64, p: f64, margin: f64) -> Result<LogPdeReport, AnalysisError> {
    if !(p > 1.0) {
        return Err(AnalysisError::InvalidInput(format!("p must satisfy p > 1, got {p}")));
    }
    let mesh = u.mesh();
    let poly = mesh.domain();
    let vals = u.values();
    let floor = U_FLOOR_FRACTION * u.max();
    let inside: Vec<bool> = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| !mesh.is_boundary(i) && contains(poly, x, margin) && vals[i] >= floor)
        .collect();

    let grads: Vec<Option<[f64; 2]>> = mesh
        .triangles()
        .iter()
        .zip(mesh.elements())
        .map(|(tri, el)| {
            if !tri.iter().all(|&i| inside[i]) {
                return None;
            }
            let mut g = [0.0; 2];
            for k in 0..3 {
                let w = -vals[tri[k]].ln();
                g[0] += w * el.grads[k][0];
                g[1] += w * el.grads[k][1];
            }
            Some(g)
        })
        .collect();
    let gmax = grads.iter().flatten().map(|&g| norm(g)).fold(0.0, f64::max);
    let g_floor = GRADIENT_FLOOR_FRACTION * gmax;

    let mut residual = vec![0.0; mesh.num_nodes()];
    let mut mass = vec![0.0; mesh.num_nodes()];
    let mut eligible: Vec<bool> = inside.clone();
    for ((tri, el), g) in mesh.triangles().iter().zip(mesh.elements()).zip(&grads) {
        let Some(g) = g else {
            tri.iter().for_each(|&i| eligible[i] = false);
            continue;
        };
        let gn = norm(*g);
        if gn < g_floor {
            tri.iter().for_each(|&i| eligible[i] = false);
            continue;
        }
        let flux = gn.powf(p - 2.0);
        let source = lambda + (p - 1.0) * gn.powf(p);
        for (a, &i) in tri.iter().enumerate() {
            let stiff = flux * (g[0] * el.grads[a][0] + g[1] * el.grads[a][1]);
            for k in 0..3 {
                let phi = Element::basis_at(a, k);
                residual[i] += el.qweights[k] * (stiff + source * phi);
                mass[i] += el.qweights[k] * phi;
            }
        }
    }

    let tested: Vec<(usize, f64)> = (0..mesh.num_nodes())
        .filter(|&i| eligible[i])
        .map(|i| (i, residual[i].abs() / mass[i]))
        .collect();
    if tested.is_empty() {
        return Err(AnalysisError::EmptyTestSet);
    }
    let (worst_node, max) = tested
        .iter()
        .copied()
        .fold((usize::MAX, f64::NEG_INFINITY), |acc, r| if r.1 > acc.1 { r } else { acc });
    Ok(LogPdeReport {
        residual: max,
        mean: tested.iter().map(|r| r.1).sum::<f64>() / tested.len() as f64,
        n_nodes: tested.len(),
        worst_node,
        margin,
        gradient_floor: g_floor,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::geometry::ConvexPolygon;
    use crate::mesh::triangulate;

    #[test]
    fn margin_too_large_gives_empty_set() {
        let mesh = Arc::new(triangulate(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), 0.1).unwrap());
        let poly = mesh.domain().clone();
        let u = NodalField::from_fn(Arc::clone(&mesh), |x| poly.signed_distance(x));
        assert!(matches!(
            logpde_residual_field(&u, 1.0, 2.0, 0.6),
            Err(AnalysisError::EmptyTestSet)
        ));
    }

    #[test]
    fn linear_log_field_matches_pointwise_residual() {
        // w = x_1 gives Delta_{2,gamma} w = -x_1, so the normalised residual at
        // a node is close to |x_1 + 1| there.
        let mesh = Arc::new(triangulate(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), 0.05).unwrap());
        let u = NodalField::from_fn(Arc::clone(&mesh), |x| (-x[0]).exp());
        let r = logpde_residual_field(&u, 0.0, 2.0, 0.15).unwrap();
        let x1 = mesh.nodes()[r.worst_node][0];
        assert!((r.residual - (x1 + 1.0)).abs() < 1e-2, "{r:?}");
        assert!((r.mean - 1.0).abs() < 1e-2, "{r:?}");
    }
}
