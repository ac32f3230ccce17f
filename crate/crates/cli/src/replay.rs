//! Recorded trace index served by `opstab-replay-tracer`.
//!
//! Each entry is `<index>/<key>.json` holding `{"document": TraceDocument,
//! "stdout": "..."}`. The key is the first 16 hex digits of the SHA-256 of the
//! solution source, the mode, and for dynamic entries the first 16 hex digits
//! of the SHA-256 of the input, joined by dots.

use std::path::{Path, PathBuf};

use opstab_core::sandbox::{TraceDocument, TraceMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayEntry {
    pub document: TraceDocument,
    #[serde(default)]
    pub stdout: String,
}

fn short_digest(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn entry_key(source: &[u8], mode: TraceMode, input: &[u8]) -> String {
    match mode {
        TraceMode::Static => format!("{}.static", short_digest(source)),
        TraceMode::Dynamic => format!("{}.dynamic.{}", short_digest(source), short_digest(input)),
    }
}

pub fn entry_path(index: &Path, source: &[u8], mode: TraceMode, input: &[u8]) -> PathBuf {
    index.join(format!("{}.json", entry_key(source, mode, input)))
}

/// Looks up the recorded answer and rebinds it to `solution_id`.
pub fn lookup(
    index: &Path,
    source: &[u8],
    mode: TraceMode,
    input: &[u8],
    solution_id: &str,
) -> Result<ReplayEntry, String> {
    let path = entry_path(index, source, mode, input);
    let text = std::fs::read_to_string(&path).map_err(|e| format!("no recorded trace {}: {e}", path.display()))?;
    let mut entry: ReplayEntry = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    if entry.document.mode != mode {
        return Err(format!("{}: recorded mode {} differs", path.display(), entry.document.mode));
    }
    entry.document.solution_id = solution_id.to_string();
    Ok(entry)
}
