//! CSV and JSON artifact writing: RFC-4180 with LF line endings, floats at
//! 17 significant digits, and atomic write-temp-then-rename.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::CliError;

/// 17 significant digits: enough to round-trip any f64 exactly.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    format!("{v:.16e}")
}

pub struct CsvWriter {
    rows: Vec<String>,
    width: usize,
}

impl CsvWriter {
    pub fn new(header: &[&str]) -> Self {
        Self { rows: vec![header.join(",")], width: header.len() }
    }

    pub fn row(&mut self, fields: &[String]) {
        assert_eq!(fields.len(), self.width, "csv row width mismatch");
        self.rows.push(fields.join(","));
    }

    pub fn write(self, path: &Path) -> Result<(), CliError> {
        let mut text = self.rows.join("\n");
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }
}

/// Write to `<path>.tmp`, then rename over the target.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::Io)?;
    }
    let tmp: PathBuf = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = fs::File::create(&tmp).map_err(CliError::Io)?;
        f.write_all(bytes).map_err(CliError::Io)?;
        f.sync_all().map_err(CliError::Io)?;
    }
    fs::rename(&tmp, path).map_err(CliError::Io)
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Config(format!("serializing meta: {e}")))?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}
