//! One `manifest.json` per output directory.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::usage;

pub const FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seed: u64,
    /// SHA-256 over the subcommand, the config snapshot and every input file.
    pub input_hash: String,
    pub output_dir: PathBuf,
    pub started_unix: u64,
    pub elapsed_seconds: Option<f64>,
    pub tool_version: String,
}

pub fn content_hash(
    subcommand: &str,
    config: &serde_json::Value,
    inputs: &[&Path],
) -> Result<String> {
    let mut h = Sha256::new();
    h.update(subcommand.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(config)?);
    for p in inputs {
        h.update([0]);
        let bytes = std::fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

/// An open output directory. Refuses a directory whose manifest was written
/// for different inputs.
pub struct OutputDir {
    pub path: PathBuf,
    manifest: RunManifest,
    started: Instant,
    /// An earlier manifest with the same hash was found.
    pub resumed: bool,
}

impl OutputDir {
    pub fn open(
        path: &Path,
        subcommand: &str,
        config: serde_json::Value,
        seed: u64,
        inputs: &[&Path],
    ) -> Result<Self> {
        let input_hash = content_hash(subcommand, &config, inputs)?;
        let mpath = path.join(FILE);
        let mut resumed = false;
        if mpath.exists() {
            let old: RunManifest = serde_json::from_str(&std::fs::read_to_string(&mpath)?)
                .with_context(|| format!("reading {}", mpath.display()))?;
            if old.input_hash != input_hash {
                return Err(usage(format!(
                    "{} holds outputs for different inputs (manifest hash {} vs {}); refusing to overwrite",
                    path.display(),
                    &old.input_hash[..12],
                    &input_hash[..12]
                )));
            }
            resumed = true;
        }
        std::fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))?;
        let started_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let out = Self {
            path: path.to_path_buf(),
            manifest: RunManifest {
                subcommand: subcommand.to_string(),
                config,
                seed,
                input_hash,
                output_dir: path.to_path_buf(),
                started_unix,
                elapsed_seconds: None,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
            },
            started: Instant::now(),
            resumed,
        };
        out.write()?;
        Ok(out)
    }

    fn write(&self) -> Result<()> {
        let p = self.path.join(FILE);
        std::fs::write(&p, serde_json::to_string_pretty(&self.manifest)? + "\n")
            .with_context(|| format!("writing {}", p.display()))
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn finish(mut self) -> Result<()> {
        self.manifest.elapsed_seconds = Some(self.started.elapsed().as_secs_f64());
        self.write()
    }
}
