use std::sync::Arc;

use gauss_plap::analysis::{
    bm_sweep, concavity_function, control_tolerance, inf_convolution_trial, log_concavity_check,
    log_concavity_check_field, logpde_residual, midpoint_concavity_field,
};
use gauss_plap::analysis::logpde::logpde_residual_field;
use gauss_plap::energy::NodalField;
use gauss_plap::geometry::{contains, minkowski_combination};
use gauss_plap::mesh::triangulate;
use gauss_plap::oracles::linear_p2_eigensolve;
use gauss_plap::{solve_first_eigenpair, ConvexPolygon, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit_square() -> ConvexPolygon {
    ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap()
}

#[test]
fn eigenfunction_on_16_gon_is_log_concave() {
    let poly = ConvexPolygon::regular(16, 0.6, [0.0, 0.0], 0.0).unwrap();
    let h = 0.05;
    let res = solve_first_eigenpair(&poly, &SolverConfig::new(2.0), h).unwrap();
    let report = log_concavity_check(&res, 3.0 * h, 5000, None, 4).unwrap();
    assert!(report.verdict.passed(), "{report:?}");
    let exhaustive = midpoint_concavity_field(&res.u, 0.3, Some(report.tolerance)).unwrap();
    assert_eq!(exhaustive.verdict, report.verdict);
}

#[test]
fn concavity_pattern_respects_reflection_symmetry() {
    let h = 0.05;
    let res = solve_first_eigenpair(&unit_square(), &SolverConfig::new(2.0), h).unwrap();
    let tol = control_tolerance(res.mesh(), 3.0 * h).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut sample = || loop {
        let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        if contains(&unit_square(), x, 3.0 * h) {
            return x;
        }
    };
    for _ in 0..200 {
        let (x, y) = (sample(), sample());
        let c = concavity_function(&res.u, x, y, 0.5).unwrap();
        for flip in [[-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] {
            let m = |p: [f64; 2]| [flip[0] * p[0], flip[1] * p[1]];
            let cm = concavity_function(&res.u, m(x), m(y), 0.5).unwrap();
            assert!((c - cm).abs() <= tol, "{c} vs {cm}");
        }
    }
}

#[test]
fn analytic_log_concave_field_passes_its_own_calibration() {
    for poly in [unit_square(), ConvexPolygon::rectangle(-0.75, -0.25, 0.75, 0.25).unwrap()] {
        let mesh = Arc::new(triangulate(&poly, 0.05).unwrap());
        let u = NodalField::from_fn(Arc::clone(&mesh), |x| (-(x[0] * x[0] + x[1] * x[1])).exp());
        let report = log_concavity_check_field(&u, 0.15, 5000, None, 2).unwrap();
        assert!(report.verdict.passed(), "{report:?}");
    }
}

#[test]
fn logpde_residual_decreases_under_refinement() {
    let margin = 0.3;
    let residuals: Vec<f64> = [0.1, 0.05]
        .iter()
        .map(|&h| {
            let res = solve_first_eigenpair(&unit_square(), &SolverConfig::new(2.0), h).unwrap();
            logpde_residual(&res, margin).unwrap().residual
        })
        .collect();
    assert!(residuals[0] >= 1.5 * residuals[1], "{residuals:?}");
}

/// Same residual assembled from raw node coordinates with its own hat
/// function values and quadrature weights.
fn independent_logpde(u: &NodalField, lambda: f64, margin: f64) -> f64 {
    let mesh = u.mesh();
    let poly = mesh.domain();
    let nodes = mesh.nodes();
    let vals = u.values();
    let floor = 1e-8 * u.max();
    let ok = |i: usize| !mesh.is_boundary(i) && contains(poly, nodes[i], margin) && vals[i] >= floor;
    let mut grads = Vec::new();
    for t in mesh.triangles() {
        if !t.iter().all(|&i| ok(i)) {
            grads.push(None);
            continue;
        }
        let [a, b, c] = t.map(|i| nodes[i]);
        let [wa, wb, wc] = t.map(|i| -vals[i].ln());
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let gx = ((wb - wa) * (c[1] - a[1]) - (wc - wa) * (b[1] - a[1])) / det;
        let gy = ((wc - wa) * (b[0] - a[0]) - (wb - wa) * (c[0] - a[0])) / det;
        grads.push(Some([gx, gy]));
    }
    let gmax = grads.iter().flatten().map(|g| g[0].hypot(g[1])).fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..nodes.len() {
        if !ok(i) {
            continue;
        }
        let fan: Vec<usize> = (0..mesh.num_triangles()).filter(|&t| mesh.triangles()[t].contains(&i)).collect();
        if fan.iter().any(|&t| grads[t].is_none_or(|g| g[0].hypot(g[1]) < 1e-6 * gmax)) {
            continue;
        }
        let (mut r, mut m) = (0.0, 0.0);
        for &t in &fan {
            let tri = mesh.triangles()[t];
            let g = grads[t].unwrap();
            let k = tri.iter().position(|&j| j == i).unwrap();
            let (j1, j2) = (tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let (x, y, z) = (nodes[i], nodes[j1], nodes[j2]);
            let area = 0.5 * ((y[0] - x[0]) * (z[1] - x[1]) - (z[0] - x[0]) * (y[1] - x[1])).abs();
            // grad phi_i is perpendicular to the opposite edge.
            let (ex, ey) = (z[0] - y[0], z[1] - y[1]);
            let grad_phi = [-ey / (2.0 * area), ex / (2.0 * area)];
            let sign = if (x[0] - y[0]) * grad_phi[0] + (x[1] - y[1]) * grad_phi[1] > 0.0 { 1.0 } else { -1.0 };
            let gn = g[0].hypot(g[1]);
            let stiff = sign * (g[0] * grad_phi[0] + g[1] * grad_phi[1]);
            for (q, phi) in [
                ([0.5 * (x[0] + y[0]), 0.5 * (x[1] + y[1])], 0.5),
                ([0.5 * (x[0] + z[0]), 0.5 * (x[1] + z[1])], 0.5),
                ([0.5 * (y[0] + z[0]), 0.5 * (y[1] + z[1])], 0.0),
            ] {
                let w = area / 3.0 * (-0.5 * (q[0] * q[0] + q[1] * q[1])).exp();
                r += w * (stiff + (lambda + gn * gn) * phi);
                m += w * phi;
            }
        }
        worst = worst.max(r.abs() / m);
    }
    worst
}

#[test]
fn logpde_residual_matches_independent_assembly() {
    let mesh = Arc::new(triangulate(&unit_square(), 0.05).unwrap());
    let pair = linear_p2_eigensolve(&mesh).unwrap();
    let a = logpde_residual_field(&pair.u, pair.lambda, 2.0, 0.3).unwrap().residual;
    let b = independent_logpde(&pair.u, pair.lambda, 0.3);
    assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
}

#[test]
fn inf_convolution_of_a_field_with_itself_reproduces_it() {
    let res = solve_first_eigenpair(&unit_square(), &SolverConfig::new(2.0), 0.05).unwrap();
    let trial = inf_convolution_trial(&res, &res, 0.5, res.mesh(), 40).unwrap();
    assert!(trial.rq >= res.lambda - 1e-8);
    assert!((trial.rq - res.lambda).abs() <= 0.02 * res.lambda);
}

#[test]
fn inf_convolution_is_sandwiched() {
    let sq = unit_square();
    let rot = sq.rotated(std::f64::consts::FRAC_PI_4).unwrap();
    let cfg = SolverConfig::new(2.0);
    let h = 0.05;
    let r0 = solve_first_eigenpair(&sq, &cfg, h).unwrap();
    let r1 = solve_first_eigenpair(&rot, &cfg, h).unwrap();
    for t in [0.25, 0.5, 0.75] {
        let poly = minkowski_combination(&sq, &rot, t).unwrap();
        let rt = solve_first_eigenpair(&poly, &cfg, h).unwrap();
        let trial = inf_convolution_trial(&r0, &r1, t, rt.mesh(), 60).unwrap();
        let chord = (1.0 - t) * r0.lambda + t * r1.lambda;
        assert!(trial.rq >= rt.lambda - 1e-8, "t = {t}");
        assert!(trial.rq <= 1.05 * chord, "t = {t}: {} > {chord}", trial.rq);
    }
}

#[test]
fn bm_sweep_identical_and_rotated_squares() {
    let sq = unit_square();
    let grid: Vec<f64> = (0..=4).map(|k| k as f64 / 4.0).collect();
    let cfg = SolverConfig::new(2.0);
    let same = bm_sweep(&sq, &sq, &cfg, 0.1, &grid).unwrap();
    for row in &same.rows {
        assert!(row.slack_t.abs() <= cfg.grad_tol * same.lambda_0, "{row:?}");
    }
    let rot = sq.rotated(std::f64::consts::FRAC_PI_4).unwrap();
    let report = bm_sweep(&sq, &rot, &cfg, 0.1, &grid).unwrap();
    assert_eq!(report.rows[0].slack_t, 0.0);
    assert_eq!(report.rows[4].slack_t, 0.0);
    assert_eq!(report.rows[0].lambda_t, report.lambda_0);
    assert!(report.verdict.passed(), "{report:?}");
}
