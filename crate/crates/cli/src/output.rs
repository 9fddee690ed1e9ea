//! Output documents. Every document opens with a metadata header; CSV puts
//! it on `#` comment lines above the column header.

use std::io::Write;
use std::path::Path;

use clap::ValueEnum;
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    /// Whether any arm's table came from the error-free (`p = 1`) path.
    pub error_free: bool,
}

impl Meta {
    fn comment(&self) -> String {
        format!(
            "# tool={} version={} command={} config_hash={} seed={} error_free={}\n",
            self.tool, self.version, self.command, self.config_hash, self.seed, self.error_free
        )
    }
}

#[derive(Serialize)]
struct JsonDocument<'a, R: Serialize, E: Serialize> {
    meta: &'a Meta,
    rows: &'a [R],
    #[serde(skip_serializing_if = "Option::is_none")]
    extra: Option<&'a E>,
}

/// Renders `rows` in `format`. JSON documents may carry an `extra` payload
/// that has no flat CSV form.
pub fn render<R: Serialize, E: Serialize>(
    meta: &Meta,
    rows: &[R],
    extra: Option<&E>,
    format: Format,
) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Csv => {
            let mut buf = meta.comment().into_bytes();
            {
                let mut w = csv::WriterBuilder::new()
                    .terminator(csv::Terminator::Any(b'\n'))
                    .from_writer(&mut buf);
                for row in rows {
                    w.serialize(row).map_err(|e| CliError::Io(format!("csv: {e}")))?;
                }
                w.flush().map_err(|e| CliError::Io(format!("csv: {e}")))?;
            }
            Ok(buf)
        }
        Format::Json => {
            let doc = JsonDocument { meta, rows, extra };
            let mut buf = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Io(format!("json: {e}")))?;
            buf.push(b'\n');
            Ok(buf)
        }
    }
}

/// Writes to `path`, or standard output when absent.
pub fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Io(format!("stdout: {e}"))),
    }
}
