use std::sync::Arc;

use gauss_plap::analysis::hopf_check;
use gauss_plap::eigensolver::{
    distance_initial_guess, minimize_rq, random_initial_guess, relative_sup_distance, solve_from, solve_on_mesh,
};
use gauss_plap::energy::{evaluate, p_norm_constraint, EnergyParams};
use gauss_plap::mesh::{triangulate, TriMesh};
use gauss_plap::oracles::{brute_force_min, linear_p2_eigensolve};
use gauss_plap::{solve_first_eigenpair, ConvexPolygon, SolverConfig};

fn unit_square() -> ConvexPolygon {
    ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap()
}

fn square_mesh(h: f64) -> Arc<TriMesh> {
    Arc::new(triangulate(&unit_square(), h).unwrap())
}

#[test]
fn unregularized_p2_minimum_matches_linear_oracle() {
    let mesh = square_mesh(0.1);
    let oracle = linear_p2_eigensolve(&mesh).unwrap();
    let params = EnergyParams::new(2.0, 0.0).unwrap();
    let min = minimize_rq(&params, &distance_initial_guess(&mesh), 1e-6, 50_000).unwrap();
    assert!((min.lambda - oracle.lambda).abs() <= 1e-8 * oracle.lambda);
    assert!(relative_sup_distance(&min.u, &oracle.u) < 1e-4);
}

#[test]
fn brute_force_agrees_with_solver_on_coarse_mesh() {
    let mesh = square_mesh(0.3);
    assert!(mesh.num_interior() <= 12);
    for p in [1.5, 2.0, 3.0] {
        let solved = solve_on_mesh(Arc::clone(&mesh), &SolverConfig::new(p)).unwrap();
        let params = EnergyParams::new(p, solved.final_eps).unwrap();
        let brute = brute_force_min(&mesh, &params, 100_000, 17).unwrap();
        assert!(brute.min_rq >= solved.lambda - 1e-6, "p = {p}: {} < {}", brute.min_rq, solved.lambda);
        assert!(
            (brute.min_rq - solved.lambda).abs() <= 1e-4 * solved.lambda,
            "p = {p}: {} vs {}",
            brute.min_rq,
            solved.lambda
        );
        if p == 2.0 {
            let linear = linear_p2_eigensolve(&mesh).unwrap();
            let brute0 = brute_force_min(&mesh, &EnergyParams::new(2.0, 0.0).unwrap(), 100_000, 17).unwrap();
            assert!((brute0.min_rq - linear.lambda).abs() <= 1e-6);
        }
    }
}

#[test]
fn random_starts_agree_for_p3() {
    let mesh = square_mesh(0.1);
    let cfg = SolverConfig::new(3.0);
    let a = solve_from(random_initial_guess(&mesh, 1, 1), &cfg).unwrap();
    let b = solve_from(random_initial_guess(&mesh, 2, 1), &cfg).unwrap();
    assert!((a.lambda - b.lambda).abs() <= 1e-6 * a.lambda);
    assert!(relative_sup_distance(&a.u, &b.u) <= 1e-4);
}

#[test]
fn eigen_result_invariants_and_weak_form() {
    for p in [1.5, 2.0, 3.0] {
        let cfg = SolverConfig::new(p);
        let res = solve_first_eigenpair(&unit_square(), &cfg, 0.1).unwrap();
        assert!(res.lambda > 0.0);
        assert!(res.u.values().iter().all(|&v| v >= -1e-12));
        assert!((p_norm_constraint(&res.u, p) - 1.0).abs() <= 1e-10);
        assert!(res.history.windows(2).all(|w| w[1].1 <= w[0].1 + 1e-9));
        assert!(hopf_check(&res.u).verdict.passed());

        // Discrete Euler-Lagrange residual in the dual lumped-mass norm.
        let mesh = res.mesh();
        let params = EnergyParams::new(p, res.final_eps).unwrap();
        let ev = evaluate(mesh, res.u.values(), &params, true);
        let mass = mesh.lumped_mass();
        let residual: f64 = (0..mesh.num_nodes())
            .filter(|&i| !mesh.is_boundary(i))
            .map(|i| (ev.energy_grad[i] - res.lambda * ev.constraint_grad[i]).powi(2) / mass[i])
            .sum::<f64>()
            .sqrt();
        assert!(residual <= cfg.grad_tol * res.lambda, "p = {p}: {residual}");
    }
}

#[test]
fn refinement_is_monotone_and_second_order_for_p2() {
    let coarse = square_mesh(0.2);
    let meshes = [
        Arc::clone(&coarse),
        Arc::new(coarse.refine_uniform().unwrap()),
        Arc::new(coarse.refine_uniform().unwrap().refine_uniform().unwrap()),
    ];
    let cfg = SolverConfig::new(2.0);
    let lambdas: Vec<f64> = meshes
        .iter()
        .map(|m| solve_on_mesh(Arc::clone(m), &cfg).unwrap().lambda)
        .collect();
    assert!(lambdas.windows(2).all(|w| w[1] <= w[0] + 1e-8), "{lambdas:?}");
    let ratio = (lambdas[0] - lambdas[1]) / (lambdas[1] - lambdas[2]);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn domain_monotonicity_without_dilation_invariance() {
    let small = unit_square();
    let big = ConvexPolygon::square(2.0, [0.0, 0.0]).unwrap();
    for p in [1.5, 2.0, 3.0] {
        let cfg = SolverConfig::new(p);
        let a = solve_first_eigenpair(&small, &cfg, 0.1).unwrap().lambda;
        let b = solve_first_eigenpair(&big, &cfg, 0.1).unwrap().lambda;
        assert!(a > b, "p = {p}: {a} <= {b}");
    }
}

#[test]
fn translated_domain_converges() {
    let cfg = SolverConfig::new(2.0);
    let centred = solve_first_eigenpair(&unit_square(), &cfg, 0.1).unwrap();
    let shifted = solve_first_eigenpair(&unit_square().translated([3.0, 0.0]), &cfg, 0.1).unwrap();
    assert!(centred.lambda > 0.0 && shifted.lambda > 0.0);
}

#[test]
fn restarts_are_counted() {
    let mut cfg = SolverConfig::new(2.0);
    cfg.n_restarts = 3;
    let res = solve_first_eigenpair(&unit_square(), &cfg, 0.1).unwrap();
    assert_eq!(res.restarts_agreeing, 3);
}
