//! Command-line experiment runner for `tfelab`.
//!
//! Each subcommand reads a strict TOML config, runs one experiment, writes
//! its outputs atomically and finishes with a `manifest.json` that records
//! the canonical config, its hash, the tolerances used and a digest of every
//! file. `reproduce` replays a manifest and compares the outputs.

pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod run;

use std::path::Path;
use std::time::Instant;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use manifest::{reproduce, ReproduceReport, RunManifest};

/// Runs `cfg` on `workers` threads (0: all cores) and persists the outputs
/// under `out_dir`. Numerical failures leave a `FAILED.json` marker instead.
pub fn execute(cfg: &ExperimentConfig, out_dir: &Path, workers: usize) -> CliResult<RunManifest> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start {workers} workers: {e}")))?;
    let start = Instant::now();
    let result = pool.install(|| run::dispatch(cfg));
    let wall = start.elapsed().as_secs_f64();
    let outcome =
        result.and_then(|outputs| manifest::persist(out_dir, cfg, &outputs, wall, pool.current_num_threads()));
    match outcome {
        Ok(m) => Ok(m),
        Err(e @ CliError::Validation(_)) => Err(e),
        Err(e) => {
            manifest::write_failure(out_dir, cfg, &e)?;
            Err(e)
        }
    }
}
