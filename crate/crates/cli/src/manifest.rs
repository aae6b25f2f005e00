//! Run manifests: what a command produced and how its built-in invariant
//! checks came out.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::io_util::write_file;
use crate::CliError;

/// One invariant evaluated against a run, with the measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    /// A check that passes when `measured <= threshold`.
    pub fn upper(name: &str, measured: f64, threshold: f64) -> Self {
        Check {
            name: name.to_string(),
            measured,
            threshold,
            pass: measured.is_finite() && measured <= threshold,
        }
    }
}

/// Manifest written atomically as the last output of every command.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Wall-clock start/end, seconds since the Unix epoch.
    pub started_unix: f64,
    pub finished_unix: f64,
    pub config: C,
    /// Output files (relative to the output directory), all present once
    /// the manifest exists.
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Serialize the manifest to `<dir>/manifest.json` via a temp file and
/// rename, so a manifest never exists half-written.
pub fn write_manifest<C: Serialize>(dir: &Path, manifest: &RunManifest<C>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
    let tmp = dir.join("manifest.json.tmp");
    let target = dir.join("manifest.json");
    write_file(&tmp, |w| {
        use std::io::Write;
        writeln!(w, "{text}")
    })?;
    std::fs::rename(&tmp, &target)
        .map_err(|e| CliError::Io(format!("cannot finalize {}: {e}", target.display())))
}
