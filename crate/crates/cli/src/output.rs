//! Run directories and the manifest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn io_err(what: &str, path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{what} {}: {e}", path.display()))
}

/// Creates `dir` and proves it is writable.
pub fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err("cannot create output directory", dir, e))?;
    let probe = dir.join(".iaqsim-probe");
    fs::write(&probe, b"").map_err(|e| io_err("output directory is not writable:", dir, e))?;
    fs::remove_file(&probe).map_err(|e| io_err("cannot clean up in", dir, e))
}

/// Writes through a temporary file and a rename, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| io_err("cannot write", &tmp, e))?;
    f.write_all(bytes).and_then(|()| f.sync_all()).map_err(|e| io_err("cannot write", &tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err("cannot write", path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Everything needed to repeat a run: the scenario copy in the same
/// directory plus the seed.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub scenario_source: String,
    pub scenario_file: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub tool_version: String,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub wall_clock_s: f64,
    /// Present for sweeps.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepInfo>,
}

#[derive(Debug, Serialize)]
pub struct SweepInfo {
    pub parameter: String,
    pub values: Vec<f64>,
    pub replicas: u32,
    pub replica_seeds: Vec<u64>,
}
