use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sslc::matrix::ColumnScaling;

use super::{check_version, f32_bytes, f32_values, read_bytes, resolve, write_atomic, write_manifest, FORMAT_VERSION};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorms {
    pub name: String,
    pub channels: usize,
    pub samples: u64,
    pub norms_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationManifest {
    pub format_version: u32,
    /// SHA-256 of the activation bundle (or synthetic spec) the norms came
    /// from.
    pub source_hash: String,
    pub tensors: Vec<ChannelNorms>,
}

/// Per-tensor input-channel norms `‖X_j‖₂`, stored before clamping.
#[derive(Debug, Clone)]
pub struct CalibrationStats {
    pub dir: PathBuf,
    pub manifest: CalibrationManifest,
    /// SHA-256 over the manifest text and every norms blob.
    pub hash: String,
}

impl CalibrationStats {
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: CalibrationManifest = super::read_manifest(dir)?;
        check_version(manifest.format_version, dir)?;
        let head = read_bytes(&dir.join(super::MANIFEST))?;
        let files: Vec<PathBuf> = manifest.tensors.iter().map(|t| resolve(dir, &t.norms_path)).collect();
        let hash = super::sha256_files(&head, &files)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            hash,
        })
    }

    /// Raw norms of one tensor, validated finite and non-negative.
    pub fn norms(&self, name: &str) -> Result<Vec<f64>> {
        let entry = self
            .manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CliError::validation(format!("no calibration for tensor `{name}`")))?;
        let norms = f32_values(&read_bytes(&resolve(&self.dir, &entry.norms_path))?);
        if norms.len() != entry.channels {
            return Err(CliError::validation(format!(
                "calibration `{name}`: {} norms stored, manifest says {}",
                norms.len(),
                entry.channels
            )));
        }
        if let Some(j) = norms.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(CliError::validation(format!(
                "calibration `{name}`: invalid norm at channel {j}"
            )));
        }
        Ok(norms.iter().map(|&v| v as f64).collect())
    }

    /// Norms clamped to `epsilon`, checked against the weight's input width.
    pub fn scaling(&self, name: &str, cols: usize, epsilon: f64) -> Result<ColumnScaling> {
        let norms = self.norms(name)?;
        if norms.len() != cols {
            return Err(CliError::validation(format!(
                "tensor `{name}`: calibration has {} channels, weight has {cols} input columns",
                norms.len()
            )));
        }
        Ok(ColumnScaling::new(norms, epsilon)?)
    }

    /// Writes norms (rounded to `f32`) under `dir`. Entries are written in
    /// name order.
    pub fn write(
        dir: &Path,
        source_hash: &str,
        mut tensors: Vec<(String, u64, Vec<f64>)>,
    ) -> Result<CalibrationManifest> {
        tensors.sort_by(|a, b| a.0.cmp(&b.0));
        let mut entries = Vec::with_capacity(tensors.len());
        for (k, (name, samples, norms)) in tensors.into_iter().enumerate() {
            let norms_path = format!("norms-{k:04}.f32");
            write_atomic(&dir.join(&norms_path), &f32_bytes(norms.iter().map(|&v| v as f32)))?;
            entries.push(ChannelNorms {
                name,
                channels: norms.len(),
                samples,
                norms_path,
            });
        }
        let manifest = CalibrationManifest {
            format_version: FORMAT_VERSION,
            source_hash: source_hash.to_string(),
            tensors: entries,
        };
        write_manifest(dir, &manifest)?;
        Ok(manifest)
    }
}
