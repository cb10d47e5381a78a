//! Output plumbing: atomic file writes and CSV headers that embed the full
//! resolved configuration as an audit trail.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

pub struct OutputDir {
    dir: PathBuf,
    header_prefix: Vec<String>,
}

impl OutputDir {
    pub fn new(
        dir: &Path,
        subcommand: &str,
        config_name: &str,
        config_text: &str,
        seed: u64,
    ) -> Result<OutputDir, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| {
            CliError::Usage(format!("cannot create output dir {}: {e}", dir.display()))
        })?;
        let mut header = vec![
            format!("poltherm {} {subcommand}", env!("CARGO_PKG_VERSION")),
            format!("config = {config_name}"),
            format!("seed = {seed}"),
            "resolved config:".to_string(),
        ];
        for line in config_text.lines() {
            header.push(format!("  {line}"));
        }
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            header_prefix: header,
        })
    }

    pub fn header(&self) -> &[String] {
        &self.header_prefix
    }

    /// Write atomically: temp file in the same directory, then rename.
    pub fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let io_err =
            |e: std::io::Error| CliError::Usage(format!("writing {}: {e}", path.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        tmp.write_all(body.as_bytes()).map_err(io_err)?;
        tmp.persist(&path)
            .map_err(|e| CliError::Usage(format!("writing {}: {e}", path.display())))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    /// CSV with `#`-prefixed audit header, a column header row, and rows of
    /// fixed-precision scientific numbers (RFC-4180 bodies, '.' decimal).
    pub fn write_csv(
        &self,
        name: &str,
        extra_header: &[String],
        columns: &[&str],
        rows: impl Iterator<Item = Vec<f64>>,
    ) -> Result<PathBuf, CliError> {
        let mut body = String::new();
        for line in self.header().iter().chain(extra_header) {
            body.push_str("# ");
            body.push_str(line);
            body.push('\n');
        }
        body.push_str(&columns.join(","));
        body.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.write(name, &body)
    }
}
