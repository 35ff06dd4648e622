//! First eigenpair by minimisation of the regularized Rayleigh quotient.
//!
//! `R_eps(u) = E_eps(u) / N(u)` is scale invariant, so the solver runs plain
//! descent on the nodal values and renormalises to `N(u) = 1` after every
//! step. Directions are the lumped-mass preconditioned negative gradient,
//! step lengths come from alternating Barzilai-Borwein proposals safeguarded
//! by an Armijo backtracking line search, which makes the accepted values of
//! `R_eps` nonincreasing.
//!
//! `eps` is driven down a decreasing schedule, each stage warm-started from
//! the previous one. Since `R_eps(u)` is nondecreasing in `eps` for fixed `u`,
//! warm starts plus monotone descent make the recorded `lambda_eps` history
//! nonincreasing as `eps` decreases.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{evaluate, EnergyError, EnergyParams, NodalField, Reduction};
use crate::geometry::ConvexPolygon;
use crate::mesh::{triangulate, MeshError, TriMesh};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(
        "no convergence after {} iterations (relative gradient norm {:e})",
        best.iterations,
        best.grad_norm
    )]
    NoConvergence { best: Box<RqMinimum> },
    #[error("restart {restart} disagrees: relative lambda gap {lambda_gap:e}, field gap {field_gap:e}")]
    RestartDisagreement {
        restart: usize,
        lambda_gap: f64,
        field_gap: f64,
    },
}

/// Decades from `1e-1` down to `1e-8`.
pub fn default_eps_schedule() -> Vec<f64> {
    (1..=8).map(|k| 10f64.powi(-k)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub p: f64,
    pub eps_schedule: Vec<f64>,
    /// Stop when `||grad R||_{M^-1} / R` falls below this.
    pub grad_tol: f64,
    pub max_iters: usize,
    /// Random restarts run in addition to the distance-function start.
    pub n_restarts: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default = "default_restart_lambda_tol")]
    pub restart_lambda_tol: f64,
    #[serde(default = "default_restart_field_tol")]
    pub restart_field_tol: f64,
}

fn default_restart_lambda_tol() -> f64 {
    1e-6
}

fn default_restart_field_tol() -> f64 {
    1e-3
}

impl SolverConfig {
    pub fn new(p: f64) -> Self {
        Self {
            p,
            eps_schedule: default_eps_schedule(),
            grad_tol: 1e-5,
            max_iters: 50_000,
            n_restarts: 0,
            rng_seed: 0x5eed,
            reduction: Reduction::Sequential,
            restart_lambda_tol: default_restart_lambda_tol(),
            restart_field_tol: default_restart_field_tol(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.p > 1.0 && self.p.is_finite()) {
            return bad(format!("p must satisfy p > 1, got {}", self.p));
        }
        if self.eps_schedule.is_empty() {
            return bad("eps_schedule must not be empty".into());
        }
        if self.eps_schedule.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return bad("eps_schedule entries must be positive".into());
        }
        if self.eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_schedule must be strictly decreasing".into());
        }
        if !(self.grad_tol > 0.0) {
            return bad(format!("grad_tol must be positive, got {}", self.grad_tol));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if !(self.restart_lambda_tol > 0.0 && self.restart_field_tol > 0.0) {
            return bad("restart tolerances must be positive".into());
        }
        Ok(())
    }
}

/// Output of [`minimize_rq`].
#[derive(Debug, Clone)]
pub struct RqMinimum {
    pub lambda: f64,
    /// Nonnegative, `N(u) = 1`.
    pub u: NodalField,
    pub iterations: usize,
    /// `||grad R||_{M^-1} / R` at the returned iterate.
    pub grad_norm: f64,
    pub converged: bool,
    /// `R` at every accepted iterate, starting with the initial guess.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub lambda: f64,
    pub u: NodalField,
    pub p: f64,
    pub final_eps: f64,
    pub mesh_h: f64,
    pub iterations: usize,
    pub restarts_agreeing: usize,
    pub grad_norm_final: f64,
    /// `(eps, lambda_eps)` per continuation stage.
    pub history: Vec<(f64, f64)>,
}

impl EigenResult {
    pub fn mesh(&self) -> &Arc<TriMesh> {
        self.u.mesh()
    }
}

struct Workspace<'a> {
    mesh: &'a TriMesh,
    params: EnergyParams,
    mass: Vec<f64>,
}

impl Workspace<'_> {
    /// Normalise in place to `N = 1`; returns `(R, grad R, grad norm)`.
    fn normalise_and_eval(&self, x: &mut [f64]) -> Option<(f64, Vec<f64>, f64)> {
        let n0 = evaluate(self.mesh, x, &self.params, false).constraint;
        if !(n0 > 1e-300 && n0.is_finite()) {
            return None;
        }
        let s = n0.powf(-1.0 / self.params.p);
        x.iter_mut().for_each(|v| *v *= s);
        let ev = evaluate(self.mesh, x, &self.params, true);
        let r = ev.rayleigh_quotient();
        let g = ev.rq_gradient(self.mesh);
        let gn = self.dual_norm(&g) / r;
        Some((r, g, gn))
    }

    fn dual_norm(&self, g: &[f64]) -> f64 {
        g.iter()
            .zip(&self.mass)
            .map(|(gi, mi)| if *mi > 0.0 { gi * gi / mi } else { 0.0 })
            .sum::<f64>()
            .sqrt()
    }
}

/// Minimise `R_eps` from `u0`.
///
/// On hitting `max_iters` (or a stalled line search) above `grad_tol` the best
/// iterate is returned inside [`SolverError::NoConvergence`].
pub fn minimize_rq(
    params: &EnergyParams,
    u0: &NodalField,
    grad_tol: f64,
    max_iters: usize,
) -> Result<RqMinimum, SolverError> {
    u0.check_boundary()?;
    let mesh = Arc::clone(u0.mesh());
    let ws = Workspace {
        mesh: &mesh,
        params: *params,
        mass: mesh
            .lumped_mass()
            .into_iter()
            .enumerate()
            .map(|(i, m)| if mesh.is_boundary(i) { 0.0 } else { m })
            .collect(),
    };
    let mut x = u0.values().to_vec();
    let (mut r, mut g, mut gn) = ws.normalise_and_eval(&mut x).ok_or(EnergyError::ZeroField)?;
    let mut trace = vec![r];
    let mut alpha = 1.0 / r;
    let mut iterations = 0;
    let mut converged = gn <= grad_tol;

    while !converged && iterations < max_iters {
        let d: Vec<f64> = g
            .iter()
            .zip(&ws.mass)
            .map(|(gi, mi)| if *mi > 0.0 { -gi / mi } else { 0.0 })
            .collect();
        let slope: f64 = g.iter().zip(&d).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            break;
        }

        // Armijo with strict decrease; on failure retry once from the initial step.
        let mut accepted = None;
        let mut step = alpha;
        for start in [alpha, 1.0 / r] {
            step = start;
            for _ in 0..60 {
                let mut xt: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + step * di).collect();
                if let Some((rt, gt, gnt)) = ws.normalise_and_eval(&mut xt) {
                    if rt < r && rt <= r + 1e-4 * step * slope {
                        accepted = Some((xt, rt, gt, gnt));
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((xt, rt, gt, gnt)) = accepted else {
            break;
        };
        iterations += 1;

        // Alternating BB steps in the lumped-mass metric.
        let mut sy = 0.0;
        let mut sms = 0.0;
        let mut ymy = 0.0;
        for i in 0..x.len() {
            let mi = ws.mass[i];
            if mi > 0.0 {
                let s = xt[i] - x[i];
                let y = gt[i] - g[i];
                sy += s * y;
                sms += mi * s * s;
                ymy += y * y / mi;
            }
        }
        alpha = if sy > 0.0 {
            if iterations % 2 == 0 {
                sms / sy
            } else {
                sy / ymy
            }
        } else {
            2.0 * step
        };

        x = xt;
        r = rt;
        g = gt;
        gn = gnt;
        trace.push(r);
        converged = gn <= grad_tol;
    }

    // Fix the sign and take |u|.
    let mass_sum: f64 = x.iter().zip(&ws.mass).map(|(v, m)| v * m).sum();
    if mass_sum < 0.0 {
        x.iter_mut().for_each(|v| *v = -*v);
    }
    if x.iter().any(|&v| v < 0.0) {
        x.iter_mut().for_each(|v| *v = v.abs());
        if let Some((r2, _, gn2)) = ws.normalise_and_eval(&mut x) {
            r = r2;
            gn = gn2;
            converged = gn <= grad_tol;
        }
    }

    let result = RqMinimum {
        lambda: r,
        u: NodalField::new(Arc::clone(&mesh), x)?,
        iterations,
        grad_norm: gn,
        converged,
        trace,
    };
    if converged {
        Ok(result)
    } else {
        Err(SolverError::NoConvergence { best: Box::new(result) })
    }
}

/// Interpolant of the distance to the boundary, scaled to max 1.
pub fn distance_initial_guess(mesh: &Arc<TriMesh>) -> NodalField {
    let poly = mesh.domain();
    let dist: Vec<f64> = mesh
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| if mesh.is_boundary(i) { 0.0 } else { poly.signed_distance(x).max(0.0) })
        .collect();
    let dmax = dist.iter().copied().fold(0.0, f64::max);
    let scale = if dmax > 0.0 { 1.0 / dmax } else { 1.0 };
    NodalField::new(Arc::clone(mesh), dist.into_iter().map(|d| d * scale).collect())
        .expect("distance field is finite")
}

/// Positive random field for restart `index` (>= 1).
pub fn random_initial_guess(mesh: &Arc<TriMesh>, seed: u64, index: u64) -> NodalField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let values = (0..mesh.num_nodes())
        .map(|i| if mesh.is_boundary(i) { 0.0 } else { rng.random_range(0.05..1.0) })
        .collect();
    NodalField::new(Arc::clone(mesh), values).expect("random field is finite")
}

struct Continuation {
    min: RqMinimum,
    iterations: usize,
    history: Vec<(f64, f64)>,
}

fn continue_in_eps(cfg: &SolverConfig, u0: NodalField) -> Result<Continuation, SolverError> {
    let mut u = u0;
    let mut history = Vec::with_capacity(cfg.eps_schedule.len());
    let mut iterations = 0;
    let mut last = None;
    for (stage, &eps) in cfg.eps_schedule.iter().enumerate() {
        let params = EnergyParams::new(cfg.p, eps)?.with_reduction(cfg.reduction);
        let final_stage = stage + 1 == cfg.eps_schedule.len();
        let min = match minimize_rq(&params, &u, cfg.grad_tol, cfg.max_iters) {
            Ok(m) => m,
            Err(SolverError::NoConvergence { best }) if !final_stage => *best,
            Err(e) => return Err(e),
        };
        iterations += min.iterations;
        history.push((eps, min.lambda));
        u = min.u.clone();
        last = Some(min);
    }
    Ok(Continuation {
        min: last.expect("schedule is non-empty"),
        iterations,
        history,
    })
}

/// Continuation along `cfg.eps_schedule` from a single start, without restarts.
pub fn solve_from(u0: NodalField, cfg: &SolverConfig) -> Result<EigenResult, SolverError> {
    cfg.validate()?;
    let mesh_h = u0.mesh().h();
    let run = continue_in_eps(cfg, u0)?;
    Ok(EigenResult {
        lambda: run.min.lambda,
        u: run.min.u,
        p: cfg.p,
        final_eps: *cfg.eps_schedule.last().expect("validated"),
        mesh_h,
        iterations: run.iterations,
        restarts_agreeing: 0,
        grad_norm_final: run.min.grad_norm,
        history: run.history,
    })
}

/// Relative sup-norm distance between two fields on the same mesh.
pub fn relative_sup_distance(a: &NodalField, b: &NodalField) -> f64 {
    let scale = a.max().abs().max(b.max().abs()).max(f64::MIN_POSITIVE);
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Run the continuation from the distance start plus `cfg.n_restarts` random
/// starts, check agreement and return the primary result.
pub fn solve_on_mesh(mesh: Arc<TriMesh>, cfg: &SolverConfig) -> Result<EigenResult, SolverError> {
    cfg.validate()?;
    if mesh.num_interior() == 0 {
        return Err(MeshError::ResolutionTooCoarse("mesh has no interior node".into()).into());
    }
    let starts: Vec<NodalField> = std::iter::once(distance_initial_guess(&mesh))
        .chain((1..=cfg.n_restarts as u64).map(|k| random_initial_guess(&mesh, cfg.rng_seed, k)))
        .collect();
    let runs: Vec<Result<Continuation, SolverError>> = if starts.len() > 1 {
        starts.into_par_iter().map(|u0| continue_in_eps(cfg, u0)).collect()
    } else {
        starts.into_iter().map(|u0| continue_in_eps(cfg, u0)).collect()
    };
    let mut runs = runs.into_iter();
    let primary = runs.next().expect("at least one start")?;
    let mut restarts_agreeing = 0;
    for (k, run) in runs.enumerate() {
        let run = run?;
        let lambda_gap = (run.min.lambda - primary.min.lambda).abs() / primary.min.lambda;
        let field_gap = relative_sup_distance(&run.min.u, &primary.min.u);
        if lambda_gap > cfg.restart_lambda_tol || field_gap > cfg.restart_field_tol {
            return Err(SolverError::RestartDisagreement {
                restart: k + 1,
                lambda_gap,
                field_gap,
            });
        }
        restarts_agreeing += 1;
    }
    Ok(EigenResult {
        lambda: primary.min.lambda,
        u: primary.min.u,
        p: cfg.p,
        final_eps: *cfg.eps_schedule.last().expect("validated"),
        mesh_h: mesh.h(),
        iterations: primary.iterations,
        restarts_agreeing,
        grad_norm_final: primary.min.grad_norm,
        history: primary.history,
    })
}

/// Mesh `poly` at size `h` and solve.
pub fn solve_first_eigenpair(poly: &ConvexPolygon, cfg: &SolverConfig, h: f64) -> Result<EigenResult, SolverError> {
    cfg.validate()?;
    let mesh = Arc::new(triangulate(poly, h)?);
    solve_on_mesh(mesh, cfg)
}

/// P1 interpolation of `src` onto the nodes of `dst`; boundary nodes and
/// nodes outside the source mesh get 0.
pub fn warm_start_interpolate(src: &NodalField, dst: &Arc<TriMesh>) -> NodalField {
    let values = dst
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            if dst.is_boundary(i) {
                0.0
            } else {
                src.eval(x).unwrap_or(0.0)
            }
        })
        .collect();
    NodalField::new(Arc::clone(dst), values).expect("interpolated values are finite")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::rayleigh_quotient;

    fn square_mesh(h: f64) -> Arc<TriMesh> {
        Arc::new(triangulate(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), h).unwrap())
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolverConfig::new(2.0);
        assert!(cfg.validate().is_ok());
        cfg.eps_schedule = vec![1e-2, 1e-1];
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::new(0.5);
        assert!(matches!(cfg.validate(), Err(SolverError::InvalidConfig(m)) if m.contains("p > 1")));
        cfg.p = 2.0;
        cfg.grad_tol = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn descent_is_monotone() {
        let mesh = square_mesh(0.1);
        let params = EnergyParams::new(3.0, 1e-2).unwrap();
        let u0 = random_initial_guess(&mesh, 3, 1);
        let m = minimize_rq(&params, &u0, 1e-6, 20_000).unwrap();
        assert!(m.trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(m.u.min() >= 0.0);
        let n = crate::energy::p_norm_constraint(&m.u, 3.0);
        assert!((n - 1.0).abs() < 1e-10);
        assert!((rayleigh_quotient(&m.u, &params).unwrap() - m.lambda).abs() < 1e-12 * m.lambda);
    }

    #[test]
    fn no_convergence_returns_best() {
        let mesh = square_mesh(0.1);
        let params = EnergyParams::new(2.0, 1e-2).unwrap();
        let u0 = random_initial_guess(&mesh, 3, 1);
        match minimize_rq(&params, &u0, 1e-12, 3) {
            Err(SolverError::NoConvergence { best }) => {
                assert_eq!(best.iterations, 3);
                assert!(best.lambda < best.trace[0]);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn warm_start_onto_same_mesh_is_identity() {
        let mesh = square_mesh(0.15);
        let u = distance_initial_guess(&mesh);
        let v = warm_start_interpolate(&u, &mesh);
        for (a, b) in u.values().iter().zip(v.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn warm_start_constant_field() {
        let fine = square_mesh(0.05);
        let coarse = square_mesh(0.2);
        let ones = NodalField::from_fn(Arc::clone(&fine), |_| 1.0);
        let v = warm_start_interpolate(&ones, &coarse);
        let fine_ring: Vec<bool> = {
            let mut r = vec![false; fine.num_triangles()];
            for (t, tri) in fine.triangles().iter().enumerate() {
                r[t] = tri.iter().any(|&i| fine.is_boundary(i));
            }
            r
        };
        for (i, &x) in coarse.nodes().iter().enumerate() {
            if coarse.is_boundary(i) {
                assert_eq!(v.values()[i], 0.0);
            } else if let Some((t, _)) = fine.locate(x) {
                if !fine_ring[t] {
                    assert!((v.values()[i] - 1.0).abs() < 1e-14);
                }
            }
        }
        let params = EnergyParams::new(2.0, 0.0).unwrap();
        assert!(rayleigh_quotient(&v, &params).unwrap().is_finite());
    }
}
