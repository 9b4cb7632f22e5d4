//! On-disk bundles. Every bundle is a directory holding a `manifest.json`
//! plus little-endian binary blobs referenced from it.

mod calibration;
mod compressed;
mod weights;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub use calibration::{CalibrationManifest, CalibrationStats, ChannelNorms};
pub use compressed::{quantize, record_for, BLOB, CompressedBundle, CompressedManifest, RunFlags, Section, Sections, TensorRecord};
pub use weights::{ActivationStream, TensorEntry, WeightBundle, WeightManifest, WeightTensor};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| CliError::validation(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| CliError::io(&tmp, e))?;
    f.sync_all().map_err(|e| CliError::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn read_manifest<T: DeserializeOwned>(dir: &Path) -> Result<T> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::validation(format!("{}: malformed manifest: {e}", path.display())))
}

pub fn manifest_text<T: Serialize>(manifest: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    Ok(text)
}

pub fn write_manifest<T: Serialize>(dir: &Path, manifest: &T) -> Result<()> {
    write_atomic(&dir.join(MANIFEST), manifest_text(manifest)?.as_bytes())
}

pub fn check_version(found: u32, path: &Path) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(CliError::validation(format!(
            "{}: unsupported format_version {found} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

/// Resolves a blob path relative to its bundle directory.
pub fn resolve(dir: &Path, blob: &str) -> PathBuf {
    dir.join(blob)
}

pub fn f32_bytes(values: impl IntoIterator<Item = f32>) -> Vec<u8> {
    values.into_iter().flat_map(f32::to_le_bytes).collect()
}

pub fn f32_values(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

/// Hex SHA-256 over a sequence of byte slices.
pub fn sha256_hex<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Hex SHA-256 over `head` followed by the contents of `files`, streamed
/// from disk.
pub fn sha256_files(head: &[u8], files: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(head);
    for path in files {
        let mut f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
        std::io::copy(&mut f, &mut h).map_err(|e| CliError::io(path, e))?;
    }
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Stable 64-bit hash of a tensor name: the first eight bytes of its
/// SHA-256, little-endian.
pub fn name_hash(name: &str) -> u64 {
    let digest = Sha256::digest(name.as_bytes());
    let mut b = [0u8; 8];
    b.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(b)
}
