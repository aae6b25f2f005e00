//! File helpers: deterministic CSV emission and snapshot parsing.
//!
//! Reals are written with Rust's shortest round-trip formatting, so parsing
//! a file back recovers bit-identical values and repeated runs produce
//! byte-identical output.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fragkin::{DensityState, SizeGrid};

use crate::CliError;

pub fn read_config_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))
}

pub fn parse_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_config_text(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("cannot parse {}: {e}", path.display())))
}

pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::Io(format!("cannot create {}: {e}", path.display())))
}

/// Write a file through a closure, mapping failures to the I/O exit code.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let file = File::create(path).map_err(io_err)?;
    let mut writer = BufWriter::new(file);
    body(&mut writer).map_err(io_err)?;
    writer.flush().map_err(io_err)
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Io(format!("cannot serialize {}: {e}", path.display())))?;
    write_file(path, |w| writeln!(w, "{text}"))
}

/// Density snapshot as CSV: a `# t = <time>` comment, a header, then rows.
pub fn write_snapshot(path: &Path, state: &DensityState) -> Result<(), CliError> {
    write_file(path, |w| {
        writeln!(w, "# t = {}", state.time())?;
        writeln!(w, "r,n")?;
        for (r, n) in state.grid().nodes().iter().zip(state.values()) {
            writeln!(w, "{r},{n}")?;
        }
        Ok(())
    })
}

/// Parse a snapshot CSV back into a density state.
///
/// Accepts the format written by `write_snapshot`; the time comment is
/// optional (zero when absent). The radii must form a geometric grid.
pub fn read_snapshot(path: &Path) -> Result<DensityState, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Config(format!("cannot read snapshot {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut time = 0.0f64;
    let mut radii = Vec::new();
    let mut values = Vec::new();
    let bad = |line_no: usize, what: &str| {
        CliError::Config(format!(
            "snapshot {} line {line_no}: {what}",
            path.display()
        ))
    };
    for (idx, line) in reader.lines().enumerate() {
        let line =
            line.map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(t_text) = comment.trim().strip_prefix("t =") {
                time = t_text
                    .trim()
                    .parse()
                    .map_err(|_| bad(idx + 1, "unparsable time comment"))?;
            }
            continue;
        }
        if trimmed == "r,n" {
            continue;
        }
        let (r_text, n_text) = trimmed
            .split_once(',')
            .ok_or_else(|| bad(idx + 1, "expected two comma-separated columns"))?;
        radii.push(
            r_text
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(idx + 1, "unparsable radius"))?,
        );
        values.push(
            n_text
                .trim()
                .parse::<f64>()
                .map_err(|_| bad(idx + 1, "unparsable density"))?,
        );
    }
    let grid = SizeGrid::from_nodes(radii).map_err(CliError::from)?;
    DensityState::new(std::sync::Arc::new(grid), values, time).map_err(CliError::from)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fragkin::InitialCondition;
    use std::sync::Arc;

    #[test]
    fn snapshot_round_trip_is_exact() {
        let grid = Arc::new(SizeGrid::logarithmic(1e-3, 10.0, 64).unwrap());
        let state = fragkin::init_density(
            &InitialCondition::NarrowBump {
                r0: 0.5,
                width: 0.1,
            },
            grid,
            2.0,
        )
        .unwrap();
        let dir = std::env::temp_dir().join("fragkin_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("snap.csv");
        write_snapshot(&path, &state).unwrap();
        let back = read_snapshot(&path).unwrap();
        assert_eq!(back.time(), state.time());
        assert_eq!(back.values(), state.values());
        assert_eq!(back.grid().nodes(), state.grid().nodes());
        std::fs::remove_dir_all(&dir).ok();
    }
}
