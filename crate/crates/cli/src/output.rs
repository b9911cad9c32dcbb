//! Output directory with a config snapshot and a manifest listing every file
//! with its SHA-256 digest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const OUTPUT_ROOT_ENV: &str = "STOCHBIF_OUTPUT_ROOT";

/// Files are buffered and written together by [`OutputDir::commit`], so
/// nothing reaches disk before a run has produced all of its results.
#[derive(Debug)]
pub struct OutputDir {
    path: PathBuf,
    files: BTreeMap<String, Vec<u8>>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    name: &'a str,
    bytes: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    files: Vec<ManifestEntry<'a>>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl OutputDir {
    pub fn new(path: PathBuf) -> Self {
        Self {
            path,
            files: BTreeMap::new(),
        }
    }

    pub fn add(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.insert(name.to_string(), contents.into());
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) {
        let mut text = serde_json::to_string_pretty(value).expect("serialisable");
        text.push('\n');
        self.add(name, text);
    }

    /// Writes every file and then `manifest.json`.
    pub fn commit(self, command: &str) -> Result<PathBuf, CliError> {
        let io = |path: &Path| {
            let path = path.display().to_string();
            move |source| CliError::Io { path, source }
        };
        std::fs::create_dir_all(&self.path).map_err(io(&self.path))?;
        let mut entries = Vec::new();
        for (name, bytes) in &self.files {
            let p = self.path.join(name);
            std::fs::write(&p, bytes).map_err(io(&p))?;
            // diagnostics carry wall times and are left out of the digest list
            if name != "diagnostics.json" {
                entries.push(ManifestEntry {
                    name,
                    bytes: bytes.len(),
                    sha256: hex(&Sha256::digest(bytes)),
                });
            }
        }
        let manifest = Manifest {
            schema_version: SCHEMA_VERSION,
            command,
            files: entries,
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("serialisable");
        text.push('\n');
        let p = self.path.join("manifest.json");
        std::fs::write(&p, text).map_err(io(&p))?;
        Ok(self.path)
    }
}

/// Seventeen significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV text from a header and rows of already formatted cells.
pub fn csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
