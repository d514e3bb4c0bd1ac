//! Run manifests, atomic output writing, and reproduction checks.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{config_hash, ExperimentConfig};
use crate::error::{CliError, CliResult};

pub const MANIFEST_NAME: &str = "manifest.json";
pub const FAILURE_NAME: &str = "FAILED.json";
/// Relative tolerance for numerical comparison when bytes differ.
pub const REPRODUCE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    /// Canonical TOML of the config the run used.
    pub config: String,
    pub artifact_version: String,
    pub wall_time_s: f64,
    pub workers: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub files: Vec<FileEntry>,
}

/// Files produced by a run, in write order, plus the tolerances it used.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(String, Vec<u8>)>,
    pub tolerances: BTreeMap<String, f64>,
}

impl Outputs {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut bytes = serde_json::to_vec_pretty(value).expect("outputs serialize to JSON");
        bytes.push(b'\n');
        self.add(name, bytes);
    }

    pub fn tolerance(&mut self, key: &str, value: f64) {
        self.tolerances.insert(key.to_string(), value);
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(())
}

/// Writes every output atomically and then the manifest, which lists them.
pub fn persist(
    out_dir: &Path,
    cfg: &ExperimentConfig,
    outputs: &Outputs,
    wall_time_s: f64,
    workers: usize,
) -> CliResult<RunManifest> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(outputs.files.len());
    for (name, bytes) in &outputs.files {
        write_atomic(&out_dir.join(name), bytes)?;
        files.push(FileEntry {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    let manifest = RunManifest {
        command: cfg.command().to_string(),
        config_hash: cfg.hash(),
        config: cfg.canonical(),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s,
        workers,
        tolerances: outputs.tolerances.clone(),
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&out_dir.join(MANIFEST_NAME), &bytes)?;
    let stale = out_dir.join(FAILURE_NAME);
    if stale.exists() {
        fs::remove_file(stale)?;
    }
    Ok(manifest)
}

/// Failure marker for numerical or i/o failures.
pub fn write_failure(out_dir: &Path, cfg: &ExperimentConfig, err: &CliError) -> CliResult<PathBuf> {
    fs::create_dir_all(out_dir)?;
    let detail = match err {
        CliError::Numerical { detail, .. } => detail.clone(),
        _ => serde_json::Value::Null,
    };
    let marker = serde_json::json!({
        "command": cfg.command(),
        "config_hash": cfg.hash(),
        "exit_code": err.exit_code(),
        "error": err.to_string(),
        "detail": detail,
    });
    let path = out_dir.join(FAILURE_NAME);
    let mut bytes = serde_json::to_vec_pretty(&marker).expect("marker serializes");
    bytes.push(b'\n');
    write_atomic(&path, &bytes)?;
    Ok(path)
}

pub fn read_manifest(path: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("malformed manifest: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileStatus {
    /// Byte-identical to the manifest digest.
    Match,
    /// Bytes differ but every number agrees to the reproduction tolerance.
    NumericMatch,
    Mismatch,
    /// Listed in the manifest but absent on disk.
    Missing,
    /// Present on disk but its digest disagrees with the manifest.
    Corrupted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileCheck {
    pub path: String,
    pub status: FileStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReproduceReport {
    pub command: String,
    pub config_hash: String,
    pub all_match: bool,
    pub first_divergence: Option<String>,
    pub files: Vec<FileCheck>,
}

/// Checks the manifest's config hash and on-disk files, reruns the config
/// into a scratch directory and compares every listed output.
pub fn reproduce(manifest_path: &Path, workers: usize) -> CliResult<ReproduceReport> {
    let manifest = read_manifest(manifest_path)?;
    let recomputed = config_hash(&manifest.command, &manifest.config);
    if recomputed != manifest.config_hash {
        return Err(CliError::Validation(format!(
            "config hash mismatch: manifest records {}, config hashes to {recomputed}",
            manifest.config_hash
        )));
    }
    let cfg = ExperimentConfig::from_toml(&manifest.command, &manifest.config)?;
    if cfg.canonical() != manifest.config {
        return Err(CliError::Validation("embedded config is not in canonical form".into()));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut checks: Vec<FileCheck> = Vec::new();
    for f in &manifest.files {
        let status = match fs::read(base.join(&f.path)) {
            Err(_) => FileStatus::Missing,
            Ok(bytes) if sha256_hex(&bytes) != f.sha256 => FileStatus::Corrupted,
            Ok(_) => FileStatus::Match,
        };
        checks.push(FileCheck {
            path: f.path.clone(),
            status,
        });
    }
    let scratch = tempfile::tempdir()?;
    let rerun = crate::execute(&cfg, scratch.path(), workers)?;
    for (check, entry) in checks.iter_mut().zip(&manifest.files) {
        if check.status != FileStatus::Match {
            continue;
        }
        let fresh = rerun.files.iter().find(|f| f.path == entry.path);
        check.status = match fresh {
            None => FileStatus::Mismatch,
            Some(f) if f.sha256 == entry.sha256 => FileStatus::Match,
            Some(_) => {
                let old = fs::read(base.join(&entry.path))?;
                let new = fs::read(scratch.path().join(&entry.path))?;
                if numerically_equal(&entry.path, &old, &new, REPRODUCE_RTOL) {
                    FileStatus::NumericMatch
                } else {
                    FileStatus::Mismatch
                }
            }
        };
    }
    let first_divergence = checks
        .iter()
        .find(|c| !matches!(c.status, FileStatus::Match | FileStatus::NumericMatch))
        .map(|c| c.path.clone());
    Ok(ReproduceReport {
        command: manifest.command,
        config_hash: manifest.config_hash,
        all_match: first_divergence.is_none(),
        first_divergence,
        files: checks,
    })
}

fn close(a: f64, b: f64, rtol: f64) -> bool {
    a == b || (a.is_nan() && b.is_nan()) || (a - b).abs() <= rtol * a.abs().max(b.abs())
}

fn json_close(a: &serde_json::Value, b: &serde_json::Value, rtol: f64) -> bool {
    use serde_json::Value as V;
    match (a, b) {
        (V::Number(x), V::Number(y)) => match (x.as_f64(), y.as_f64()) {
            (Some(p), Some(q)) => close(p, q, rtol),
            _ => x == y,
        },
        (V::Array(x), V::Array(y)) => x.len() == y.len() && x.iter().zip(y).all(|(p, q)| json_close(p, q, rtol)),
        (V::Object(x), V::Object(y)) => {
            x.len() == y.len() && x.iter().all(|(k, v)| y.get(k).is_some_and(|w| json_close(v, w, rtol)))
        }
        _ => a == b,
    }
}

/// Field-wise comparison of CSV or JSON outputs.
pub fn numerically_equal(name: &str, a: &[u8], b: &[u8], rtol: f64) -> bool {
    let (Ok(a), Ok(b)) = (std::str::from_utf8(a), std::str::from_utf8(b)) else {
        return false;
    };
    if name.ends_with(".json") {
        return match (serde_json::from_str(a), serde_json::from_str(b)) {
            (Ok(x), Ok(y)) => json_close(&x, &y, rtol),
            _ => false,
        };
    }
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    la.len() == lb.len()
        && la.iter().zip(&lb).all(|(x, y)| {
            let (fx, fy): (Vec<&str>, Vec<&str>) = (x.split(',').collect(), y.split(',').collect());
            fx.len() == fy.len()
                && fx.iter().zip(&fy).all(|(p, q)| {
                    p == q || matches!((p.parse::<f64>(), q.parse::<f64>()), (Ok(u), Ok(v)) if close(u, v, rtol))
                })
        })
}
