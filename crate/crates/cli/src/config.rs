//! Run configuration file (JSON).

use std::path::PathBuf;

use clap::ValueEnum;
use gauss_plap::eigensolver::default_eps_schedule;
use gauss_plap::energy::Reduction;
use gauss_plap::geometry::{ConvexPolygon, Point};
use gauss_plap::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Solve,
    BmSweep,
    Logconcavity,
    Logpde,
    Infconv,
    OracleRadial,
    OracleP2,
    OracleBrute,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Solve => "solve",
            Experiment::BmSweep => "bm-sweep",
            Experiment::Logconcavity => "logconcavity",
            Experiment::Logpde => "logpde",
            Experiment::Infconv => "infconv",
            Experiment::OracleRadial => "oracle-radial",
            Experiment::OracleP2 => "oracle-p2",
            Experiment::OracleBrute => "oracle-brute",
        }
    }

    fn polygons_needed(self) -> usize {
        match self {
            Experiment::OracleRadial => 0,
            Experiment::BmSweep | Experiment::Infconv => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Problem {
    /// Vertex lists `[[x, y], ...]`.
    #[serde(default)]
    pub polygons: Vec<Vec<Point>>,
    pub p: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_eps_schedule")]
    pub eps_schedule: Vec<f64>,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub n_restarts: usize,
    #[serde(default = "default_seed")]
    pub rng_seed: u64,
}

fn default_h() -> f64 {
    0.05
}

fn default_grad_tol() -> f64 {
    SolverConfig::new(2.0).grad_tol
}

fn default_max_iters() -> usize {
    SolverConfig::new(2.0).max_iters
}

fn default_seed() -> u64 {
    SolverConfig::new(2.0).rng_seed
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margin: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub deterministic_reduction: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(CliError::ConfigParse)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::InvalidConfig(m));
        let pr = &self.problem;
        if !(pr.p > 1.0 && pr.p.is_finite()) {
            return bad(format!("p must satisfy p > 1, got {}", pr.p));
        }
        if !(pr.h > 0.0 && pr.h.is_finite()) {
            return bad(format!("h must satisfy h > 0, got {}", pr.h));
        }
        self.solver_config().validate().map_err(|e| CliError::InvalidConfig(e.to_string()))?;
        let need = self.experiment.polygons_needed();
        if pr.polygons.len() < need {
            return bad(format!(
                "experiment {} needs {need} polygon(s), got {}",
                self.experiment.name(),
                pr.polygons.len()
            ));
        }
        for (i, v) in pr.polygons.iter().enumerate() {
            ConvexPolygon::new(v).map_err(|e| CliError::InvalidConfig(format!("polygon {i}: {e}")))?;
        }
        if let Some(grid) = &self.t_grid {
            if grid.iter().any(|t| !(0.0..=1.0).contains(t)) || !grid.contains(&0.0) || !grid.contains(&1.0) {
                return bad("t_grid must lie in [0, 1] and contain 0 and 1".into());
            }
        }
        if let Some(m) = self.margin {
            if !(m > 0.0) {
                return bad(format!("margin must satisfy margin > 0, got {m}"));
            }
        }
        if let Some(t) = self.t {
            if !(t > 0.0 && t < 1.0) {
                return bad(format!("t must satisfy 0 < t < 1, got {t}"));
            }
        }
        if self.n_pairs == Some(0) || self.n_samples == Some(0) {
            return bad("n_pairs and n_samples must be positive".into());
        }
        if let Some(g) = self.grid_n {
            if g < 2 {
                return bad(format!("grid_n must be at least 2, got {g}"));
            }
        }
        let (r0, r1) = (self.r0.unwrap_or(0.5), self.r1.unwrap_or(2.0));
        if !(r0 > 0.0 && r1 > r0) {
            return bad(format!("radii must satisfy 0 < r0 < r1, got r0 = {r0}, r1 = {r1}"));
        }
        if self.n_dim.unwrap_or(2) < 2 {
            return bad("n_dim must be at least 2".into());
        }
        if self.experiment == Experiment::OracleP2 && pr.p != 2.0 {
            return bad(format!("oracle-p2 requires p = 2, got {}", pr.p));
        }
        Ok(())
    }

    pub fn solver_config(&self) -> SolverConfig {
        let pr = &self.problem;
        let mut cfg = SolverConfig::new(pr.p);
        cfg.eps_schedule = pr.eps_schedule.clone();
        cfg.grad_tol = pr.grad_tol;
        cfg.max_iters = pr.max_iters;
        cfg.n_restarts = pr.n_restarts;
        cfg.rng_seed = pr.rng_seed;
        cfg.reduction = if self.deterministic_reduction {
            Reduction::Sequential
        } else {
            Reduction::Parallel
        };
        cfg
    }

    pub fn polygon(&self, i: usize) -> Result<ConvexPolygon, CliError> {
        let v = self
            .problem
            .polygons
            .get(i)
            .ok_or_else(|| CliError::InvalidConfig(format!("missing polygon {i}")))?;
        ConvexPolygon::new(v).map_err(|e| CliError::InvalidConfig(format!("polygon {i}: {e}")))
    }

    pub fn margin(&self) -> f64 {
        self.margin.unwrap_or(3.0 * self.problem.h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem": {"polygons": [[[0,0],[1,0],[1,1],[0,1]]], "p": 2}, "experiment": "solve"}"#;

    #[test]
    fn defaults_are_filled_in() {
        let cfg = RunConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.problem.h, 0.05);
        assert_eq!(cfg.problem.eps_schedule.len(), 8);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert!(!cfg.deterministic_reduction);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"p\": 2", "\"p\": 2, \"grad_tol_typo\": 1e-3");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::ConfigParse(_))));
        let text = MINIMAL.replace("\"experiment\"", "\"extra\": 1, \"experiment\"");
        assert!(matches!(RunConfig::from_json(&text), Err(CliError::ConfigParse(_))));
    }

    #[test]
    fn preconditions_are_named() {
        let text = MINIMAL.replace("\"p\": 2", "\"p\": 0.5");
        let err = RunConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("p > 1"), "{err}");
        let text = MINIMAL.replace("\"solve\"", "\"bm-sweep\"");
        assert!(RunConfig::from_json(&text).is_err());
    }
}
