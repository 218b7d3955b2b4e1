//! Reproducibility manifest written next to every data artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crosslot_core::SystemConfig;
use serde::Serialize;

/// Everything needed to reproduce an output file with the same binary:
/// the command, the fully resolved configuration, and the seed. Timing is
/// informational and deliberately kept out of the data files themselves.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// Command-specific inputs beyond the system configuration (grid
    /// bounds, backend selection, table cells).
    pub args: serde_json::Value,
    pub outputs: Vec<String>,
    pub wall_ms: u128,
}

impl RunManifest {
    pub fn new(
        command: &str,
        config: &SystemConfig,
        args: serde_json::Value,
        outputs: &[&Path],
        started: Instant,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config_json(config),
            args,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            wall_ms: started.elapsed().as_millis(),
        }
    }
}

/// JSON view of a search grid, for manifests.
pub fn grid_json(g: &crosslot_core::GridSpec) -> serde_json::Value {
    serde_json::json!({
        "p_min": g.p_min,
        "p_max": g.p_max,
        "p_step": g.p_step,
        "rate_min": g.r_min,
        "rate_max": g.r_max,
        "rate_step": g.r_step,
        "refinement_rounds": g.refinement_rounds,
        "refinement_shrink": g.refinement_shrink,
    })
}

pub fn config_json(c: &SystemConfig) -> serde_json::Value {
    serde_json::json!({
        "users": c.users,
        "snr_db": c.snr_db,
        "p": c.p,
        "rate": c.rate,
        "n_slots": c.n_slots,
        "n_experiments": c.n_experiments,
        "seed": c.seed,
        "scheme": c.scheme.as_str(),
    })
}

/// `table.csv` gets its manifest at `table.csv.manifest.json`.
pub fn sidecar_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
