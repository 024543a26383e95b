//! `run_manifest.json`: what a stage read, what it wrote, and how long it took.
//!
//! Timestamps and durations live only here, so every other output of a
//! command is a pure function of its inputs, flags and seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use ntd_core::hash::sha256_hex;
use serde::{Deserialize, Serialize};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";
pub const RUN_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub stage: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    /// Paths relative to the directory holding the manifest.
    pub outputs: Vec<FileRecord>,
    pub started_unix_ms: u128,
    pub wall_clock_seconds: f64,
}

/// Collects the files a stage touches, then writes the manifest.
pub struct Stage {
    name: String,
    dir: PathBuf,
    started: Instant,
    started_unix_ms: u128,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

impl Stage {
    pub fn begin(name: &str, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            name: name.to_string(),
            dir: dir.to_path_buf(),
            started: Instant::now(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Reads an input file, checking it against any run manifest beside it.
    pub fn read_input(&mut self, path: &Path) -> Result<String> {
        let text = read_checked(path)?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(text.as_bytes()),
        });
        Ok(text)
    }

    /// Records a file some other routine already read, such as a dataset directory member.
    pub fn note_input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.record_output(name, contents.as_bytes());
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Records a file written by another routine.
    pub fn record_output(&mut self, name: &str, bytes: &[u8]) {
        self.outputs.retain(|r| r.path != name);
        self.outputs.push(FileRecord {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn finish<T: Serialize>(self, config: &T) -> Result<RunManifest> {
        let manifest = RunManifest {
            schema_version: RUN_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            stage: self.name,
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix_ms: self.started_unix_ms,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(self.dir.join(RUN_MANIFEST_FILE), text)?;
        Ok(manifest)
    }
}

pub fn load(dir: &Path) -> Result<Option<RunManifest>> {
    let path = dir.join(RUN_MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: RunManifest =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if m.schema_version != RUN_SCHEMA_VERSION {
        bail!(
            "{} has unsupported schema_version {}",
            path.display(),
            m.schema_version
        );
    }
    Ok(Some(m))
}

/// Reads a file; when its directory has a run manifest listing it, the
/// content must still match the recorded hash.
pub fn read_checked(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(m) = load(dir)? {
        if let Some(rec) = m.outputs.iter().find(|r| r.path == name) {
            if rec.sha256 != sha256_hex(text.as_bytes()) {
                bail!(crate::Usage(format!(
                    "{} does not match the hash recorded in {}",
                    path.display(),
                    RUN_MANIFEST_FILE
                )));
            }
        }
    }
    Ok(text)
}

/// Lists every recorded output whose file is missing or changed.
pub fn mismatches(dir: &Path, m: &RunManifest) -> Vec<String> {
    let mut bad = Vec::new();
    for rec in &m.outputs {
        match fs::read(dir.join(&rec.path)) {
            Ok(bytes) if sha256_hex(&bytes) == rec.sha256 => {}
            Ok(_) => bad.push(format!("{}: hash mismatch", rec.path)),
            Err(e) => bad.push(format!("{}: {e}", rec.path)),
        }
    }
    bad
}
