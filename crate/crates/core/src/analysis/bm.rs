//! `lambda(Omega_t) <= (1-t) lambda(Omega_0) + t lambda(Omega_1)` along a sweep in `t`.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalysisError, Verdict};
use crate::eigensolver::{solve_first_eigenpair, EigenResult, SolverConfig};
use crate::geometry::{minkowski_combination, ConvexPolygon};

pub const CSV_HEADER: &str = "t,lambda_t,chord_t,slack_t";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BMRow {
    pub t: f64,
    pub lambda_t: f64,
    /// `(1-t) lambda_0 + t lambda_1`
    pub chord_t: f64,
    /// `chord_t - lambda_t`
    pub slack_t: f64,
    /// Set when the solve for this `t` failed; the numeric fields are then NaN.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BMReport {
    pub rows: Vec<BMRow>,
    pub lambda_0: f64,
    pub lambda_1: f64,
    /// Over rows without error.
    pub min_slack: f64,
    /// `grad_tol * max(lambda_0, lambda_1)`
    pub solver_tol: f64,
    /// Twice the larger endpoint Richardson error estimate `|lambda_h - lambda_2h| / 3`.
    pub mesh_tol: f64,
    pub tolerance: f64,
    pub failed_rows: usize,
    pub verdict: Verdict,
}

impl BMReport {
    pub fn t_grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.t, r.lambda_t, r.chord_t, r.slack_t)?;
        }
        Ok(())
    }
}

/// Solve on `(1-t) P0 + t P1` for every `t` in `t_grid` (which must contain 0
/// and 1). The endpoint solves are reused for `t = 0` and `t = 1`, so their
/// slack is exactly zero.
pub fn bm_sweep(
    p0: &ConvexPolygon,
    p1: &ConvexPolygon,
    cfg: &SolverConfig,
    h: f64,
    t_grid: &[f64],
) -> Result<BMReport, AnalysisError> {
    if t_grid.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(AnalysisError::InvalidInput("t_grid values must lie in [0, 1]".into()));
    }
    if !t_grid.contains(&0.0) || !t_grid.contains(&1.0) {
        return Err(AnalysisError::InvalidInput("t_grid must contain 0 and 1".into()));
    }
    let solve = |poly: &ConvexPolygon, h: f64| solve_first_eigenpair(poly, cfg, h);
    let ((r0, r1), (c0, c1)) = rayon::join(
        || rayon::join(|| solve(p0, h), || solve(p1, h)),
        || rayon::join(|| solve(p0, 2.0 * h), || solve(p1, 2.0 * h)),
    );
    let (r0, r1, c0, c1): (EigenResult, EigenResult, EigenResult, EigenResult) = (r0?, r1?, c0?, c1?);
    let (l0, l1) = (r0.lambda, r1.lambda);
    let mesh_tol = 2.0 * ((r0.lambda - c0.lambda).abs() / 3.0).max((r1.lambda - c1.lambda).abs() / 3.0);
    let solver_tol = cfg.grad_tol * l0.max(l1);
    let tolerance = solver_tol + mesh_tol;

    let rows: Vec<BMRow> = t_grid
        .par_iter()
        .map(|&t| {
            let chord_t = (1.0 - t) * l0 + t * l1;
            let lambda = if t == 0.0 {
                Ok(l0)
            } else if t == 1.0 {
                Ok(l1)
            } else {
                minkowski_combination(p0, p1, t)
                    .map_err(AnalysisError::from)
                    .and_then(|poly| solve(&poly, h).map_err(AnalysisError::from))
                    .map(|r| r.lambda)
            };
            match lambda {
                Ok(lambda_t) => BMRow {
                    t,
                    lambda_t,
                    chord_t,
                    slack_t: chord_t - lambda_t,
                    error: None,
                },
                Err(e) => BMRow {
                    t,
                    lambda_t: f64::NAN,
                    chord_t,
                    slack_t: f64::NAN,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let failed_rows = rows.iter().filter(|r| r.error.is_some()).count();
    let min_slack = rows
        .iter()
        .filter(|r| r.error.is_none())
        .map(|r| r.slack_t)
        .fold(f64::INFINITY, f64::min);
    Ok(BMReport {
        rows,
        lambda_0: l0,
        lambda_1: l1,
        min_slack,
        solver_tol,
        mesh_tol,
        tolerance,
        failed_rows,
        verdict: Verdict::from_bool(min_slack >= -tolerance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_endpoints_have_zero_slack() {
        let sq = ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap();
        let cfg = SolverConfig::new(2.0);
        let report = bm_sweep(&sq, &sq, &cfg, 0.1, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(report.rows[0].slack_t, 0.0);
        assert_eq!(report.rows[2].slack_t, 0.0);
        assert!(report.rows[1].slack_t.abs() <= 1e-6 * report.lambda_0);
        assert!(report.verdict.passed());
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("t,lambda_t,chord_t,slack_t\n"));
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn grid_must_contain_endpoints() {
        let sq = ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap();
        let cfg = SolverConfig::new(2.0);
        assert!(bm_sweep(&sq, &sq, &cfg, 0.1, &[0.0, 0.5]).is_err());
    }
}
