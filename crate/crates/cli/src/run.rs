//! Experiment dispatch.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use gauss_plap::analysis::{
    bm_sweep, hopf_check, inf_convolution_trial, log_concavity_check, log_concavity_check_field, logpde_residual,
    Verdict,
};
use gauss_plap::eigensolver::solve_on_mesh;
use gauss_plap::energy::{p_norm_constraint, EnergyParams, NodalField};
use gauss_plap::geometry::minkowski_combination;
use gauss_plap::mesh::triangulate;
use gauss_plap::oracles::radial::{observed_order, radial_refinement_study, RadialResidualRow};
use gauss_plap::oracles::{brute_force_min, linear_p2_eigensolve};
use gauss_plap::{solve_first_eigenpair, EigenResult};
use serde_json::{json, Value};

use crate::config::{Experiment, RunConfig};
use crate::record::{config_hash, emit_field, write_with, PhaseTiming, ResultRecord};
use crate::CliError;

/// Relative eigenvalue agreement required of the p = 2 oracle comparison.
pub const P2_TOLERANCE: f64 = 1e-6;
/// Brute-force comparison: absolute undercut allowed and relative agreement.
pub const BRUTE_UNDERCUT: f64 = 1e-6;
pub const BRUTE_TOLERANCE: f64 = 1e-4;
/// Upper slack of the inf-convolution bound, relative to the chord.
pub const INFCONV_SLACK: f64 = 0.05;
/// Lower slack of the inf-convolution bound against the direct solve.
pub const INFCONV_LOWER: f64 = 1e-8;
/// Required residual reduction factor from `h` to `h/2`.
pub const LOGPDE_REDUCTION: f64 = 1.5;

#[derive(Debug, Clone)]
pub struct Outcome {
    pub record: ResultRecord,
    pub output_dir: PathBuf,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.record.verdict.passed()
    }
}

struct Phases(Vec<PhaseTiming>);

impl Phases {
    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.0.push(PhaseTiming {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

struct Produced {
    results: Value,
    verdict: Verdict,
    files: Vec<String>,
    /// Reported after the record is written.
    deferred_error: Option<CliError>,
}

/// Run the experiment described by the config at `config_path`.
///
/// `subcommand`, when given, must match the config's experiment; `out`
/// overrides `output_dir`.
pub fn run(config_path: &Path, subcommand: Option<Experiment>, out: Option<PathBuf>) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(config_path).map_err(|source| CliError::ConfigRead {
        path: config_path.to_path_buf(),
        source,
    })?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(sub) = subcommand {
        if sub != cfg.experiment {
            return Err(CliError::InvalidConfig(format!(
                "subcommand {} does not match config experiment {}",
                sub.name(),
                cfg.experiment.name()
            )));
        }
    }
    let config_hash = config_hash(&cfg);
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    let dir = cfg.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;

    let mut phases = Phases(Vec::new());
    let produced = match cfg.experiment {
        Experiment::Solve => solve(&cfg, &dir, &mut phases)?,
        Experiment::BmSweep => sweep(&cfg, &dir, &mut phases)?,
        Experiment::Logconcavity => logconcavity(&cfg, &dir, &mut phases)?,
        Experiment::Logpde => logpde(&cfg, &dir, &mut phases)?,
        Experiment::Infconv => infconv(&cfg, &mut phases)?,
        Experiment::OracleRadial => oracle_radial(&cfg, &dir, &mut phases)?,
        Experiment::OracleP2 => oracle_p2(&cfg, &mut phases)?,
        Experiment::OracleBrute => oracle_brute(&cfg, &mut phases)?,
    };

    let record = ResultRecord {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash,
        config: cfg,
        verdict: produced.verdict,
        results: produced.results,
        timings: phases.0,
        files: produced.files,
    };
    let path = dir.join("result.json");
    write_with(&path, |w| {
        serde_json::to_writer_pretty(&mut *w, &record)?;
        writeln!(w)
    })?;
    if let Some(e) = produced.deferred_error {
        return Err(e);
    }
    Ok(Outcome { record, output_dir: dir })
}

fn eigen_summary(res: &EigenResult) -> Value {
    json!({
        "lambda": res.lambda,
        "constraint": p_norm_constraint(&res.u, res.p),
        "p": res.p,
        "final_eps": res.final_eps,
        "mesh_h": res.mesh_h,
        "nodes": res.mesh().num_nodes(),
        "interior_nodes": res.mesh().num_interior(),
        "iterations": res.iterations,
        "restarts_agreeing": res.restarts_agreeing,
        "grad_norm_final": res.grad_norm_final,
        "history": res.history,
    })
}

fn solve_primary(cfg: &RunConfig, phases: &mut Phases) -> Result<EigenResult, CliError> {
    let poly = cfg.polygon(0)?;
    let scfg = cfg.solver_config();
    Ok(phases.time("solve", || solve_first_eigenpair(&poly, &scfg, cfg.problem.h))?)
}

fn solve(cfg: &RunConfig, dir: &Path, phases: &mut Phases) -> Result<Produced, CliError> {
    let res = solve_primary(cfg, phases)?;
    let hopf = hopf_check(&res.u);
    phases.time("write", || emit_field(&res, &dir.join("field.txt")))?;
    Ok(Produced {
        results: json!({ "eigen": eigen_summary(&res), "hopf": hopf }),
        verdict: hopf.verdict,
        files: vec!["field.txt".into(), "field_w.txt".into()],
        deferred_error: None,
    })
}

fn sweep(cfg: &RunConfig, dir: &Path, phases: &mut Phases) -> Result<Produced, CliError> {
    let (p0, p1) = (cfg.polygon(0)?, cfg.polygon(1)?);
    let grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());
    let scfg = cfg.solver_config();
    let report = phases.time("sweep", || bm_sweep(&p0, &p1, &scfg, cfg.problem.h, &grid))?;
    write_with(&dir.join("bm_sweep.csv"), |w| report.write_csv(w))?;
    let deferred_error = (report.failed_rows > 0).then(|| {
        let first = report.rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        CliError::Experiment(format!("{} sweep row(s) failed; first error: {first}", report.failed_rows))
    });
    Ok(Produced {
        verdict: report.verdict,
        results: json!({ "bm": report }),
        files: vec!["bm_sweep.csv".into()],
        deferred_error,
    })
}

fn logconcavity(cfg: &RunConfig, dir: &Path, phases: &mut Phases) -> Result<Produced, CliError> {
    let res = solve_primary(cfg, phases)?;
    let margin = cfg.margin();
    let n_pairs = cfg.n_pairs.unwrap_or(10_000);
    let seed = cfg.problem.rng_seed;
    let report = phases.time("check", || log_concavity_check(&res, margin, n_pairs, None, seed))?;
    let control = NodalField::from_fn(Arc::clone(res.mesh()), |x| (x[0] * x[0] + x[1] * x[1]).exp());
    let negative = phases.time("negative-control", || {
        log_concavity_check_field(&control, margin, n_pairs, Some(report.tolerance), seed)
    })?;
    write_with(&dir.join("concavity.csv"), |w| report.write_csv(w))?;
    write_with(&dir.join("concavity_negative_control.csv"), |w| negative.write_csv(w))?;
    emit_field(&res, &dir.join("field.txt"))?;
    Ok(Produced {
        verdict: Verdict::from_bool(report.verdict.passed() && !negative.verdict.passed()),
        results: json!({ "eigen": eigen_summary(&res), "concavity": report, "negative_control": negative }),
        files: vec![
            "concavity.csv".into(),
            "concavity_negative_control.csv".into(),
            "field.txt".into(),
            "field_w.txt".into(),
        ],
        deferred_error: None,
    })
}

fn logpde(cfg: &RunConfig, dir: &Path, phases: &mut Phases) -> Result<Produced, CliError> {
    let poly = cfg.polygon(0)?;
    let scfg = cfg.solver_config();
    let margin = cfg.margin();
    let mut rows = Vec::new();
    for (phase, h) in [("coarse", cfg.problem.h), ("fine", 0.5 * cfg.problem.h)] {
        let res = phases.time(phase, || solve_first_eigenpair(&poly, &scfg, h))?;
        rows.push((h, logpde_residual(&res, margin)?));
    }
    let ratio = rows[0].1.residual / rows[1].1.residual;
    write_with(&dir.join("logpde.csv"), |w| {
        writeln!(w, "h,residual,mean,nodes")?;
        for (h, r) in &rows {
            writeln!(w, "{h},{},{},{}", r.residual, r.mean, r.n_nodes)?;
        }
        Ok(())
    })?;
    Ok(Produced {
        verdict: Verdict::from_bool(ratio >= LOGPDE_REDUCTION),
        results: json!({
            "margin": margin,
            "coarse": rows[0].1,
            "fine": rows[1].1,
            "reduction": ratio,
            "required_reduction": LOGPDE_REDUCTION,
        }),
        files: vec!["logpde.csv".into()],
        deferred_error: None,
    })
}

fn infconv(cfg: &RunConfig, phases: &mut Phases) -> Result<Produced, CliError> {
    let (p0, p1) = (cfg.polygon(0)?, cfg.polygon(1)?);
    let t = cfg.t.unwrap_or(0.5);
    let grid_n = cfg.grid_n.unwrap_or(60);
    let scfg = cfg.solver_config();
    let h = cfg.problem.h;
    let pt = minkowski_combination(&p0, &p1, t).map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let (r0, (r1, rt)) = phases.time("solve", || {
        rayon::join(
            || solve_first_eigenpair(&p0, &scfg, h),
            || rayon::join(|| solve_first_eigenpair(&p1, &scfg, h), || solve_first_eigenpair(&pt, &scfg, h)),
        )
    });
    let (r0, r1, rt) = (r0?, r1?, rt?);
    let trial = phases.time("inf-convolution", || inf_convolution_trial(&r0, &r1, t, rt.mesh(), grid_n))?;
    let chord = (1.0 - t) * r0.lambda + t * r1.lambda;
    let lower = rt.lambda - INFCONV_LOWER;
    let upper = chord * (1.0 + INFCONV_SLACK);
    Ok(Produced {
        verdict: Verdict::from_bool(trial.rq >= lower && trial.rq <= upper),
        results: json!({
            "t": t,
            "grid_n": grid_n,
            "trial_rq": trial.rq,
            "lambda_0": r0.lambda,
            "lambda_1": r1.lambda,
            "lambda_t": rt.lambda,
            "chord": chord,
            "lower_bound": lower,
            "upper_bound": upper,
        }),
        files: Vec::new(),
        deferred_error: None,
    })
}

fn oracle_radial(cfg: &RunConfig, dir: &Path, phases: &mut Phases) -> Result<Produced, CliError> {
    let (r0, r1) = (cfg.r0.unwrap_or(0.5), cfg.r1.unwrap_or(2.0));
    let n_dim = cfg.n_dim.unwrap_or(2);
    let p = cfg.problem.p;
    let base = cfg.n_samples.unwrap_or(50);
    let counts: Vec<usize> = (0..4).map(|k| base << k).collect();
    let (solved, printed) = phases.time("radial", || {
        Ok::<_, CliError>((
            radial_refinement_study(r0, r1, n_dim, p, 1.0 / (p - 1.0), &counts)?,
            radial_refinement_study(r0, r1, n_dim, p, p - 1.0, &counts)?,
        ))
    })?;
    let (order, printed_order) = (observed_order(&solved), observed_order(&printed));
    let write_rows = |w: &mut dyn Write, exponent: f64, rows: &[RadialResidualRow]| -> std::io::Result<()> {
        for r in rows {
            writeln!(w, "{exponent},{},{},{}", r.samples, r.spacing, r.residual)?;
        }
        Ok(())
    };
    write_with(&dir.join("radial.csv"), |w| {
        writeln!(w, "exponent,samples,spacing,residual")?;
        write_rows(w, 1.0 / (p - 1.0), &solved)?;
        write_rows(w, p - 1.0, &printed)
    })?;
    let table = |rows: &[RadialResidualRow]| -> Vec<Value> {
        rows.iter()
            .map(|r| json!({ "samples": r.samples, "spacing": r.spacing, "residual": r.residual }))
            .collect()
    };
    Ok(Produced {
        verdict: Verdict::from_bool(order >= 1.0),
        results: json!({
            "exponent": 1.0 / (p - 1.0),
            "observed_order": order,
            "rows": table(&solved),
            "alternative_exponent": p - 1.0,
            "alternative_observed_order": printed_order,
            "alternative_rows": table(&printed),
        }),
        files: vec!["radial.csv".into()],
        deferred_error: None,
    })
}

fn oracle_p2(cfg: &RunConfig, phases: &mut Phases) -> Result<Produced, CliError> {
    let mesh = Arc::new(triangulate(&cfg.polygon(0)?, cfg.problem.h)?);
    let scfg = cfg.solver_config();
    let solved = phases.time("solve", || solve_on_mesh(Arc::clone(&mesh), &scfg))?;
    let linear = phases.time("linear", || linear_p2_eigensolve(&mesh))?;
    let rel = (solved.lambda - linear.lambda).abs() / linear.lambda;
    Ok(Produced {
        verdict: Verdict::from_bool(rel <= P2_TOLERANCE),
        results: json!({
            "interior_nodes": mesh.num_interior(),
            "lambda_solver": solved.lambda,
            "lambda_linear": linear.lambda,
            "relative_difference": rel,
            "tolerance": P2_TOLERANCE,
            "inverse_iterations": linear.iterations,
        }),
        files: Vec::new(),
        deferred_error: None,
    })
}

fn oracle_brute(cfg: &RunConfig, phases: &mut Phases) -> Result<Produced, CliError> {
    let mesh = Arc::new(triangulate(&cfg.polygon(0)?, cfg.problem.h)?);
    let scfg = cfg.solver_config();
    let solved = phases.time("solve", || solve_on_mesh(Arc::clone(&mesh), &scfg))?;
    let params = EnergyParams::new(cfg.problem.p, solved.final_eps)
        .map_err(|e| CliError::InvalidConfig(e.to_string()))?;
    let n = cfg.n_samples.unwrap_or(100_000);
    let brute = phases.time("brute", || brute_force_min(&mesh, &params, n, cfg.problem.rng_seed))?;
    let rel = (brute.min_rq - solved.lambda).abs() / solved.lambda;
    let pass = brute.min_rq >= solved.lambda - BRUTE_UNDERCUT && rel <= BRUTE_TOLERANCE;
    Ok(Produced {
        verdict: Verdict::from_bool(pass),
        results: json!({
            "interior_nodes": mesh.num_interior(),
            "samples": n,
            "lambda_solver": solved.lambda,
            "brute_min": brute.min_rq,
            "brute_sampled_min": brute.sampled_min,
            "relative_difference": rel,
            "tolerance": BRUTE_TOLERANCE,
        }),
        files: Vec::new(),
        deferred_error: None,
    })
}
