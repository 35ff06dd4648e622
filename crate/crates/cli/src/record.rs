//! Result record and plain-text outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gauss_plap::analysis::{Verdict, U_FLOOR_FRACTION};
use gauss_plap::EigenResult;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub version: String,
    /// SHA-256 of the parsed configuration in canonical JSON form.
    pub config_hash: String,
    pub config: RunConfig,
    pub verdict: Verdict,
    pub results: serde_json::Value,
    pub timings: Vec<PhaseTiming>,
    /// Files written next to the record, relative to the output directory.
    pub files: Vec<String>,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// Write `contents` through `f` into `path`.
pub fn write_with<F>(path: &Path, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// `field.txt` -> `field_w.txt`
pub fn companion_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("field");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_w.{ext}"),
        None => format!("{stem}_w"),
    };
    path.with_file_name(name)
}

/// Write `x y u` rows to `path` and `x y w` rows, `w = -ln max(u, u_floor)`,
/// to [`companion_path`]`(path)`. Returns the companion path.
pub fn emit_field(res: &EigenResult, path: &Path) -> Result<PathBuf, CliError> {
    let nodes = res.mesh().nodes();
    let values = res.u.values();
    let floor = U_FLOOR_FRACTION * res.u.max();
    write_with(path, |w| {
        for (x, u) in nodes.iter().zip(values) {
            writeln!(w, "{} {} {}", x[0], x[1], u)?;
        }
        Ok(())
    })?;
    let wpath = companion_path(path);
    write_with(&wpath, |w| {
        for (x, u) in nodes.iter().zip(values) {
            writeln!(w, "{} {} {}", x[0], x[1], -u.max(floor).ln())?;
        }
        Ok(())
    })?;
    Ok(wpath)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gauss_plap::{solve_first_eigenpair, ConvexPolygon, SolverConfig};

    #[test]
    fn field_files() {
        let dir = tempfile::tempdir().unwrap();
        let res = solve_first_eigenpair(&ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap(), &SolverConfig::new(2.0), 0.1)
            .unwrap();
        let path = dir.path().join("field.txt");
        let wpath = emit_field(&res, &path).unwrap();
        assert_eq!(wpath, dir.path().join("field_w.txt"));
        let u = std::fs::read_to_string(&path).unwrap();
        let w = std::fs::read_to_string(&wpath).unwrap();
        assert_eq!(u.lines().count(), res.mesh().num_nodes());
        assert_eq!(w.lines().count(), res.mesh().num_nodes());
        for (i, line) in u.lines().enumerate() {
            let v: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
            if res.mesh().is_boundary(i) {
                assert_eq!(v, 0.0);
            }
        }
        for line in w.lines() {
            let v: f64 = line.split_whitespace().nth(2).unwrap().parse().unwrap();
            assert!(v.is_finite());
        }
    }
}
