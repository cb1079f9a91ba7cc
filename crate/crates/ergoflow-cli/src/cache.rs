//! Content-hash staging: each artifact carries a sidecar recording the hash
//! of its inputs and of its own bytes, so pipeline reruns skip stages whose
//! inputs did not change and detect corrupted artifacts.

use std::path::{Path, PathBuf};

use ergoflow::Result;
use sha2::{Digest, Sha256};

pub fn hash_bytes(data: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(data);
    hex(&hasher.finalize())
}

/// Hash several labelled parts into one input key.
pub fn hash_parts(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update((p.len() as u64).to_le_bytes());
        hasher.update(p);
    }
    hex(&hasher.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".hash");
    path.with_file_name(name)
}

/// True when `path` exists, was produced from `input_key`, and its bytes
/// still match the recorded content hash.
pub fn is_current(path: &Path, input_key: &str) -> bool {
    let Ok(meta) = std::fs::read_to_string(sidecar(path)) else {
        return false;
    };
    let mut lines = meta.lines();
    let (Some(input_line), Some(content_line)) = (lines.next(), lines.next()) else {
        return false;
    };
    if input_line.strip_prefix("input:") != Some(input_key) {
        return false;
    }
    let Some(recorded) = content_line.strip_prefix("content:") else {
        return false;
    };
    match std::fs::read(path) {
        Ok(bytes) => hash_bytes(&bytes) == recorded,
        Err(_) => false,
    }
}

/// Write an artifact plus its sidecar.
pub fn store(path: &Path, content: &str, input_key: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, content)?;
    let meta = format!("input:{input_key}\ncontent:{}\n", hash_bytes(content.as_bytes()));
    std::fs::write(sidecar(path), meta)?;
    Ok(())
}
