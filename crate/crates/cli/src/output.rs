//! Atomic file output, provenance headers, and the fixed float format.
//!
//! Every run with the same inputs, configuration, and seed must produce
//! byte-identical files, so nothing here consults the clock or the
//! environment, floats are printed with 17 significant digits, and rows
//! follow deterministic orders chosen by the callers.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::config::Config;
use crate::error::{CliError, Result};

/// 17 significant digits: enough to round-trip any `f64` exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes via a temporary file in the target directory plus an atomic
/// rename, so readers never observe a half-written file.
pub fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".cogphylo-tmp-")
        .tempfile_in(dir)
        .map_err(|e| CliError::Data(format!("cannot create temp file in '{}': {e}", dir.display())))?;
    tmp.write_all(content.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("cannot finalize '{}': {e}", path.display())))?;
    Ok(())
}

/// A TSV report: `#`-prefixed provenance lines, a header row, data rows.
pub struct Report {
    provenance: Vec<String>,
    columns: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Report {
    /// Standard provenance: tool version, subcommand, configuration hash,
    /// and seed, followed by any report-specific notes.
    pub fn new(
        subcommand: &str,
        cfg: &Config,
        seed: u64,
        notes: &[&str],
        columns: Vec<&'static str>,
    ) -> Self {
        let mut provenance = vec![
            format!("cogphylo {}", env!("CARGO_PKG_VERSION")),
            format!("subcommand: {subcommand}"),
            format!("config sha256: {}", cfg.sha256()),
            format!("seed: {seed}"),
        ];
        provenance.extend(notes.iter().map(|n| n.to_string()));
        Report { provenance, columns, rows: Vec::new() }
    }

    pub fn push_row(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width mismatch");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.provenance {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.columns.join("\t"));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.render())
    }
}
