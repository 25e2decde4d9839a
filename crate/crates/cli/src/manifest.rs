//! Run manifests and atomic output writing.
//!
//! Every command stages its outputs in memory, writes each file through a
//! temp-file rename, and drops a `manifest.json` beside them recording the
//! command, inputs, parameters, and seed. Re-running the same command with
//! the same inputs reproduces every output byte for byte.

use serde::Serialize;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub inputs: Vec<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, out_dir: &Path) -> Self {
        Self {
            command: command.to_string(),
            inputs: Vec::new(),
            parameters: serde_json::Value::Object(Default::default()),
            seed: None,
            output_dir: out_dir.display().to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn parameters(mut self, value: serde_json::Value) -> Self {
        self.parameters = value;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }
}

/// Staged output set: nothing touches the output directory until every
/// file's contents exist, and each file lands via rename.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<(String, Vec<u8>)>,
}

impl OutputSet {
    pub fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    pub fn stage(&mut self, name: &str, contents: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), contents.into()));
    }

    pub fn stage_json<T: Serialize>(&mut self, name: &str, value: &T) -> serde_json::Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.stage(name, text.into_bytes());
        Ok(())
    }

    /// Write all staged files plus the manifest, each atomically.
    pub fn commit(self, manifest: &RunManifest) -> io::Result<Vec<PathBuf>> {
        fs::create_dir_all(&self.dir)?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        for (name, contents) in &self.files {
            written.push(write_atomic(&self.dir, name, contents)?);
        }
        let mut text = serde_json::to_string_pretty(manifest)
            .map_err(io::Error::other)?;
        text.push('\n');
        written.push(write_atomic(&self.dir, "manifest.json", text.as_bytes())?);
        Ok(written)
    }
}

fn write_atomic(dir: &Path, name: &str, contents: &[u8]) -> io::Result<PathBuf> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, &target)?;
    Ok(target)
}
