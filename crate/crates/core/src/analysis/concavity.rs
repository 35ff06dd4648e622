//! Sampled and exhaustive checks of the convexity of `w = -ln u`.
//!
//! `w` is the P1 interpolant of the nodal values `-ln u_i`. For a convex `w`
//! the interpolant lies above `w` by at most `h^2/2 |D^2 w|`, which bounds the
//! positive part of the concavity function of the interpolant.
//! [`calibrated_tolerance`] is ten times that bound with `|D^2 w|` estimated
//! from jumps of the elementwise gradient. Near the boundary `w` behaves like
//! `-ln dist`, so for eigenfunctions this bound is of order one; the default
//! tolerance is instead `kappa h^2` with `kappa` taken from the log-concave
//! control field `exp(-|x|^2)` on the same mesh ([`control_tolerance`]).

use std::collections::HashMap;
use std::io::{self, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Verdict, U_FLOOR_FRACTION};
use crate::eigensolver::EigenResult;
use crate::energy::NodalField;
use crate::geometry::{contains, lerp, norm, sub, Point};
use crate::mesh::TriMesh;

/// Interior points of each sampled segment.
pub const T_VALUES: [f64; 3] = [0.25, 0.5, 0.75];
/// Node limit of [`midpoint_concavity_field`].
pub const MAX_EXHAUSTIVE_NODES: usize = 400;
const CHUNK: usize = 256;

/// Violation and the `(x, y, t)` where it occurs.
type Worst = (f64, (Point, Point, f64));

pub const CSV_HEADER: &str = "pairs,worst_violation,tolerance,verdict";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcavityReport {
    pub n_pairs_tested: usize,
    /// Max of `c(x, y, t) = w((1-t)x + ty) - (1-t)w(x) - t w(y)`.
    pub worst_violation: f64,
    pub worst_location: (Point, Point, f64),
    pub margin_used: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

impl ConcavityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        writeln!(
            w,
            "{},{},{},{}",
            self.n_pairs_tested, self.worst_violation, self.tolerance, self.verdict
        )
    }
}

struct LogField<'a> {
    u: &'a NodalField,
    w: Vec<f64>,
    floor: f64,
}

impl<'a> LogField<'a> {
    fn new(u: &'a NodalField) -> Result<Self, AnalysisError> {
        let umax = u.max();
        if !(umax > 0.0) {
            return Err(AnalysisError::InvalidInput("field has no positive value".into()));
        }
        let w = u.values().iter().map(|&v| if v > 0.0 { -v.ln() } else { f64::INFINITY }).collect();
        Ok(Self {
            u,
            w,
            floor: U_FLOOR_FRACTION * umax,
        })
    }

    fn eval(&self, x: Point) -> Result<f64, AnalysisError> {
        let mesh = self.u.mesh();
        let (t, b) = mesh
            .locate(x)
            .ok_or_else(|| AnalysisError::InvalidInput(format!("point ({}, {}) outside the mesh", x[0], x[1])))?;
        let tri = mesh.triangles()[t];
        let vals = self.u.values();
        let low = tri.iter().map(|&i| vals[i]).fold(f64::INFINITY, f64::min);
        if low < self.floor {
            return Err(AnalysisError::FloorViolation {
                at: x,
                value: low,
                floor: self.floor,
            });
        }
        Ok(b[0] * self.w[tri[0]] + b[1] * self.w[tri[1]] + b[2] * self.w[tri[2]])
    }

    fn violation(&self, x: Point, y: Point, t: f64, wx: f64, wy: f64) -> Result<f64, AnalysisError> {
        Ok(self.eval(lerp(x, y, t))? - (1.0 - t) * wx - t * wy)
    }
}

/// `c(x, y, t)` for the interpolated `w = -ln u`.
pub fn concavity_function(u: &NodalField, x: Point, y: Point, t: f64) -> Result<f64, AnalysisError> {
    let field = LogField::new(u)?;
    let (wx, wy) = (field.eval(x)?, field.eval(y)?);
    field.violation(x, y, t, wx, wy)
}

/// `max(1e-10, 10 * h^2/2 * H)` where `H` bounds `|D^2 w|` over the triangles
/// that can contain points at distance `>= margin` from the boundary.
pub fn calibrated_tolerance(u: &NodalField, margin: f64) -> Result<f64, AnalysisError> {
    let field = LogField::new(u)?;
    let mesh = u.mesh();
    let poly = mesh.domain();
    let nodes = mesh.nodes();
    let vals = u.values();
    let hmax = mesh.max_edge_length();

    let mut in_region = vec![false; mesh.num_triangles()];
    let mut centroid = vec![[0.0; 2]; mesh.num_triangles()];
    let mut grad = vec![[0.0; 2]; mesh.num_triangles()];
    let mut h_region: f64 = 0.0;
    for (t, (tri, el)) in mesh.triangles().iter().zip(mesh.elements()).enumerate() {
        let c = [
            (nodes[tri[0]][0] + nodes[tri[1]][0] + nodes[tri[2]][0]) / 3.0,
            (nodes[tri[0]][1] + nodes[tri[1]][1] + nodes[tri[2]][1]) / 3.0,
        ];
        centroid[t] = c;
        if poly.signed_distance(c) < margin - hmax || tri.iter().any(|&i| vals[i] < field.floor) {
            continue;
        }
        in_region[t] = true;
        for k in 0..3 {
            grad[t][0] += field.w[tri[k]] * el.grads[k][0];
            grad[t][1] += field.w[tri[k]] * el.grads[k][1];
            let e = norm(sub(nodes[tri[k]], nodes[tri[(k + 1) % 3]]));
            h_region = h_region.max(e);
        }
    }

    let mut edges: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        if in_region[t] {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(t);
            }
        }
    }
    let hessian = edges
        .values()
        .filter(|ts| ts.len() == 2)
        .map(|ts| {
            let (a, b) = (ts[0], ts[1]);
            norm(sub(grad[a], grad[b])) / norm(sub(centroid[a], centroid[b]))
        })
        .fold(0.0, f64::max);
    Ok((10.0 * 0.5 * h_region * h_region * hessian).max(1e-10))
}

/// [`calibrated_tolerance`] of the control field `exp(-|x|^2)` on `mesh`.
pub fn control_tolerance(mesh: &Arc<TriMesh>, margin: f64) -> Result<f64, AnalysisError> {
    let control = NodalField::from_fn(Arc::clone(mesh), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
    calibrated_tolerance(&control, margin)
}

/// Sampled check on `res.u`; `tolerance: None` uses [`control_tolerance`].
pub fn log_concavity_check(
    res: &EigenResult,
    margin: f64,
    n_pairs: usize,
    tolerance: Option<f64>,
    seed: u64,
) -> Result<ConcavityReport, AnalysisError> {
    log_concavity_check_field(&res.u, margin, n_pairs, tolerance, seed)
}

/// Sample `n_pairs` pairs uniformly in `{x : dist(x, boundary) >= margin}` and
/// evaluate the concavity function at `t` in [`T_VALUES`].
pub fn log_concavity_check_field(
    u: &NodalField,
    margin: f64,
    n_pairs: usize,
    tolerance: Option<f64>,
    seed: u64,
) -> Result<ConcavityReport, AnalysisError> {
    if !(margin > 0.0) || n_pairs == 0 {
        return Err(AnalysisError::InvalidInput("need margin > 0 and at least one pair".into()));
    }
    let field = LogField::new(u)?;
    let tolerance = match tolerance {
        Some(t) => t,
        None => control_tolerance(u.mesh(), margin)?,
    };
    let poly = u.mesh().domain();
    let (lo, hi) = poly.bounding_box();

    let chunks = n_pairs.div_ceil(CHUNK);
    let per_chunk: Vec<Result<Worst, AnalysisError>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut sample = || -> Result<Point, AnalysisError> {
                for _ in 0..100_000 {
                    let x = [rng.random_range(lo[0]..=hi[0]), rng.random_range(lo[1]..=hi[1])];
                    if contains(poly, x, margin) {
                        return Ok(x);
                    }
                }
                Err(AnalysisError::InvalidInput(format!("margin {margin} leaves no interior region")))
            };
            let mut worst = (f64::NEG_INFINITY, ([0.0; 2], [0.0; 2], 0.0));
            for _ in 0..CHUNK.min(n_pairs - c * CHUNK) {
                let (x, y) = (sample()?, sample()?);
                let (wx, wy) = (field.eval(x)?, field.eval(y)?);
                for t in T_VALUES {
                    let v = field.violation(x, y, t, wx, wy)?;
                    if v > worst.0 {
                        worst = (v, (x, y, t));
                    }
                }
            }
            Ok(worst)
        })
        .collect();

    let mut worst = (f64::NEG_INFINITY, ([0.0; 2], [0.0; 2], 0.0));
    for r in per_chunk {
        let r = r?;
        if r.0 > worst.0 {
            worst = r;
        }
    }
    Ok(ConcavityReport {
        n_pairs_tested: n_pairs,
        worst_violation: worst.0,
        worst_location: worst.1,
        margin_used: margin,
        tolerance,
        verdict: Verdict::from_bool(worst.0 <= tolerance),
    })
}

/// Exhaustive variant over all pairs of nodes at distance `>= margin` from
/// the boundary.
pub fn midpoint_concavity_field(
    u: &NodalField,
    margin: f64,
    tolerance: Option<f64>,
) -> Result<ConcavityReport, AnalysisError> {
    let field = LogField::new(u)?;
    let mesh = u.mesh();
    let poly = mesh.domain();
    let nodes: Vec<usize> = mesh
        .interior_nodes()
        .into_iter()
        .filter(|&i| contains(poly, mesh.nodes()[i], margin))
        .collect();
    if nodes.len() > MAX_EXHAUSTIVE_NODES {
        return Err(AnalysisError::TooManyNodes {
            max: MAX_EXHAUSTIVE_NODES,
            got: nodes.len(),
        });
    }
    if nodes.len() < 2 {
        return Err(AnalysisError::InvalidInput("fewer than two nodes inside the margin".into()));
    }
    for &i in &nodes {
        if u.values()[i] < field.floor {
            return Err(AnalysisError::FloorViolation {
                at: mesh.nodes()[i],
                value: u.values()[i],
                floor: field.floor,
            });
        }
    }
    let tolerance = match tolerance {
        Some(t) => t,
        None => control_tolerance(u.mesh(), margin)?,
    };

    let rows: Vec<Result<Worst, AnalysisError>> = (0..nodes.len())
        .into_par_iter()
        .map(|a| {
            let mut worst = (f64::NEG_INFINITY, ([0.0; 2], [0.0; 2], 0.0));
            let (i, x) = (nodes[a], mesh.nodes()[nodes[a]]);
            for &j in &nodes[a + 1..] {
                let y = mesh.nodes()[j];
                for t in T_VALUES {
                    let v = field.violation(x, y, t, field.w[i], field.w[j])?;
                    if v > worst.0 {
                        worst = (v, (x, y, t));
                    }
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst = (f64::NEG_INFINITY, ([0.0; 2], [0.0; 2], 0.0));
    for r in rows {
        let r = r?;
        if r.0 > worst.0 {
            worst = r;
        }
    }
    Ok(ConcavityReport {
        n_pairs_tested: nodes.len() * (nodes.len() - 1) / 2,
        worst_violation: worst.0,
        worst_location: worst.1,
        margin_used: margin,
        tolerance,
        verdict: Verdict::from_bool(worst.0 <= tolerance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{dot, ConvexPolygon};
    use crate::mesh::triangulate;

    fn mesh(h: f64) -> Arc<TriMesh> {
        Arc::new(triangulate(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), h).unwrap())
    }

    #[test]
    fn gaussian_field_passes_and_log_convex_field_fails() {
        let m = mesh(0.05);
        let good = NodalField::from_fn(Arc::clone(&m), |x| (-dot(x, x)).exp());
        let tol = calibrated_tolerance(&good, 0.15).unwrap();
        assert_eq!(tol, control_tolerance(&m, 0.15).unwrap());
        let r = log_concavity_check_field(&good, 0.15, 2000, Some(tol), 1).unwrap();
        assert!(r.verdict.passed(), "{r:?}");
        let bad = NodalField::from_fn(Arc::clone(&m), |x| dot(x, x).exp());
        let r = log_concavity_check_field(&bad, 0.15, 2000, None, 1).unwrap();
        assert_eq!(r.verdict, Verdict::Fail, "{r:?}");
        assert!(r.worst_violation > 2.0 * r.tolerance, "{r:?}");
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = mesh(0.1);
        let u = NodalField::from_fn(Arc::clone(&m), |x| (-dot(x, x)).exp());
        let a = log_concavity_check_field(&u, 0.3, 1000, Some(1e-3), 9).unwrap();
        let b = log_concavity_check_field(&u, 0.3, 1000, Some(1e-3), 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn floor_violation_is_reported() {
        let m = mesh(0.1);
        let u = NodalField::from_fn(Arc::clone(&m), |x| if x[0] > 0.0 { 1.0 } else { 1e-12 });
        assert!(matches!(
            log_concavity_check_field(&u, 0.2, 100, None, 0),
            Err(AnalysisError::FloorViolation { .. })
        ));
    }

    #[test]
    fn exhaustive_check_agrees_with_sampling() {
        let m = mesh(0.1);
        for sign in [-1.0, 1.0] {
            let u = NodalField::from_fn(Arc::clone(&m), |x| (sign * dot(x, x)).exp());
            let e = midpoint_concavity_field(&u, 0.2, None).unwrap();
            let s = log_concavity_check_field(&u, 0.2, 500, Some(e.tolerance), 3).unwrap();
            assert_eq!(e.verdict, s.verdict);
        }
    }

    #[test]
    fn exhaustive_check_limits_node_count() {
        let m = mesh(0.02);
        let u = NodalField::from_fn(Arc::clone(&m), |x| (-dot(x, x)).exp());
        assert!(matches!(
            midpoint_concavity_field(&u, 0.06, None),
            Err(AnalysisError::TooManyNodes { .. })
        ));
    }
}
