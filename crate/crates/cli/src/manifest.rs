//! Per-command JSON run manifests: what ran, with which configuration, on
//! which inputs (by content hash), producing which files, and how long.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::artifact::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    /// Wall-clock seconds per phase. The only nondeterministic part.
    pub timings: BTreeMap<String, f64>,
    /// Command-specific results, e.g. training losses.
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// Accumulates a manifest while a command runs.
pub struct Recorder {
    manifest: Manifest,
    started: Instant,
}

impl Recorder {
    pub fn new(command: &str, seed: u64, config: BTreeMap<String, String>) -> Self {
        Self {
            manifest: Manifest {
                command: command.into(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                seed,
                config,
                inputs: Vec::new(),
                outputs: Vec::new(),
                timings: BTreeMap::new(),
                summary: serde_json::Value::Null,
            },
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = sha256_file(path)?;
        self.manifest.inputs.push(InputRecord {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    /// Runs `f`, recording its wall-clock time under `phase`.
    pub fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.manifest.timings.insert(phase.into(), t.elapsed().as_secs_f64());
        v
    }

    pub fn summary(&mut self, value: serde_json::Value) {
        self.manifest.summary = value;
    }

    /// Writes `<out_dir>/manifests/<command>.json` and returns its path.
    pub fn finish(mut self, out_dir: &Path) -> anyhow::Result<PathBuf> {
        self.manifest.timings.insert("total".into(), self.started.elapsed().as_secs_f64());
        let path = out_dir.join("manifests").join(format!("{}.json", self.manifest.command));
        let mut text = serde_json::to_string_pretty(&self.manifest)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
