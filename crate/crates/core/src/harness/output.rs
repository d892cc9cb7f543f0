//! CSV tables with 17-significant-digit floats and the run manifest.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::HarnessError;

/// Scientific notation with 17 significant digits; round-trips every `f64`.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &'static str, header: &[&'static str]) -> Self {
        Self {
            name,
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    /// UTF-8 CSV with LF line endings.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut writer = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        writer.write_record(&self.header).expect("write to memory");
        for row in &self.rows {
            writer.write_record(row).expect("write to memory");
        }
        writer.into_inner().expect("flush to memory")
    }

    pub fn write(&self, dir: &Path) -> Result<TableDigest, HarnessError> {
        let bytes = self.to_bytes();
        let path = dir.join(self.name);
        std::fs::write(&path, &bytes).map_err(|e| HarnessError::io(&path, e))?;
        Ok(TableDigest {
            rows: self.rows.len(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TableDigest {
    pub rows: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: RunConfig,
    pub threads: usize,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub tables: BTreeMap<&'static str, TableDigest>,
    pub summary: BTreeMap<String, f64>,
}

pub fn now_unix_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis())
}

impl RunManifest {
    pub fn new(config: &RunConfig, threads: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            threads,
            started_unix_ms: now_unix_ms(),
            finished_unix_ms: 0,
            tables: BTreeMap::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn write(&mut self, dir: &Path) -> Result<(), HarnessError> {
        self.finished_unix_ms = now_unix_ms();
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }
}

pub fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_with_17_digits() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let mantissa = s.split('e').next().unwrap().trim_start_matches('-');
            assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
        }
    }

    #[test]
    fn csv_uses_lf() {
        let mut t = Table::new("t.csv", &["a", "b"]);
        t.push(vec!["1".into(), format_float(0.5)]);
        let text = String::from_utf8(t.to_bytes()).unwrap();
        assert_eq!(text, "a,b\n1,5.0000000000000000e-1\n");
    }
}
