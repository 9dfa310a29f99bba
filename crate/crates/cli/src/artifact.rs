//! Versioned JSON envelopes around stage outputs, and atomic file writes.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use seqgraph::Error;

pub const ARTIFACT_FORMAT: &str = "seqgraph-artifact";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format: String,
    pub version: u32,
    /// Command that wrote the artifact.
    pub producer: String,
    /// Configuration in effect when it was written, verbatim.
    pub config: BTreeMap<String, String>,
    pub payload: T,
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    write_atomic_with(path, |f| f.write_all(bytes))
}

pub fn write_atomic_with(
    path: &Path,
    fill: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>,
) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = std::io::BufWriter::new(std::fs::File::create(&tmp)?);
        fill(&mut f)?;
        f.into_inner().map_err(|e| e.into_error())?.sync_all()
    })();
    match result {
        Ok(()) => std::fs::rename(&tmp, path),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn save<T: Serialize>(path: &Path, producer: &str, config: &BTreeMap<String, String>, payload: &T) -> anyhow::Result<()> {
    let env = Envelope {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        producer: producer.into(),
        config: config.clone(),
        payload,
    };
    let mut text = serde_json::to_string_pretty(&env)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn artifact_error(path: &Path, producer: &'static str, detail: impl Into<String>) -> Error {
    Error::Artifact {
        path: PathBuf::from(path),
        producer,
        detail: detail.into(),
    }
}

/// Loads an envelope written by `producer`. Every failure, including a
/// missing file, names the command that should have produced it.
pub fn load<T: DeserializeOwned>(path: &Path, producer: &'static str) -> Result<Envelope<T>, Error> {
    let text = std::fs::read_to_string(path).map_err(|e| artifact_error(path, producer, e.to_string()))?;
    let head: Envelope<serde::de::IgnoredAny> =
        serde_json::from_str(&text).map_err(|e| artifact_error(path, producer, format!("not an artifact: {e}")))?;
    if head.format != ARTIFACT_FORMAT || head.version != ARTIFACT_VERSION {
        return Err(artifact_error(
            path,
            producer,
            format!("unsupported {} v{} (expected {ARTIFACT_FORMAT} v{ARTIFACT_VERSION})", head.format, head.version),
        ));
    }
    if head.producer != producer {
        return Err(artifact_error(path, producer, format!("written by `{}`", head.producer)));
    }
    serde_json::from_str(&text).map_err(|e| artifact_error(path, producer, format!("bad payload: {e}")))
}

/// Opens a non-envelope input file, mapping absence to an artifact error.
pub fn require(path: &Path, producer: &'static str) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(artifact_error(path, producer, "file not found"))
    }
}
