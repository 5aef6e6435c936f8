//! Run report: per-check outcomes and the manifest of emitted files.

use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub fnv1a64: String,
}

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub artifact: String,
    pub wall_time_seconds: f64,
    pub checks: Vec<CheckResult>,
    pub outputs: Vec<OutputEntry>,
    pub config: serde_json::Value,
}

/// FNV-1a 64-bit content hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Collects emitted files (single writer) and produces the manifest.
pub struct OutputWriter {
    dir: PathBuf,
    formats: Vec<String>,
    entries: Vec<OutputEntry>,
}

impl OutputWriter {
    pub fn new(dir: &str, formats: &[String]) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(OutputWriter {
            dir: PathBuf::from(dir),
            formats: formats.to_vec(),
            entries: Vec::new(),
        })
    }

    pub fn wants(&self, format: &str) -> bool {
        self.formats.iter().any(|f| f == format)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Write a file and record it in the manifest.
    pub fn emit(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut file = std::fs::File::create(&path)?;
        file.write_all(bytes)?;
        self.entries.push(OutputEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            fnv1a64: format!("{:016x}", fnv1a64(bytes)),
        });
        Ok(path)
    }

    pub fn manifest(&self) -> Vec<OutputEntry> {
        self.entries.clone()
    }
}
