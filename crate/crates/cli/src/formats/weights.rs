use std::collections::BTreeSet;
use std::fs;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sslc::matrix::DenseMatrix;

use super::{check_version, f32_bytes, f32_values, read_bytes, resolve, write_atomic, write_manifest, FORMAT_VERSION};
use crate::error::{CliError, Result};

pub const DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub dtype: String,
    pub blob_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias_path: Option<String>,
    /// For activation bundles: the weight tensor this batch calibrates.
    /// Defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrates: Option<String>,
}

impl TensorEntry {
    pub fn target(&self) -> &str {
        self.calibrates.as_deref().unwrap_or(&self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightManifest {
    pub format_version: u32,
    pub tensors: Vec<TensorEntry>,
}

/// A weight matrix (or activation batch) loaded into 64-bit memory.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub name: String,
    pub matrix: DenseMatrix,
    pub bias: Option<Vec<f64>>,
}

/// A validated bundle of row-major `f32` tensors.
#[derive(Debug, Clone)]
pub struct WeightBundle {
    pub dir: PathBuf,
    pub manifest: WeightManifest,
    /// SHA-256 over the manifest text and every blob, in manifest order.
    pub hash: String,
}

fn file_len(path: &Path) -> Result<u64> {
    fs::metadata(path)
        .map(|m| m.len())
        .map_err(|e| CliError::io(path, e))
}

impl WeightBundle {
    /// Opens and validates a bundle: format version, dtype, unique names,
    /// and blob sizes.
    pub fn open(dir: &Path) -> Result<Self> {
        let manifest: WeightManifest = super::read_manifest(dir)?;
        check_version(manifest.format_version, dir)?;
        let mut names = BTreeSet::new();
        let head = read_bytes(&dir.join(super::MANIFEST))?;
        let mut hashed = Vec::new();
        for t in &manifest.tensors {
            if !names.insert(t.name.as_str()) {
                return Err(CliError::validation(format!("duplicate tensor name `{}`", t.name)));
            }
            if t.dtype != DTYPE {
                return Err(CliError::validation(format!(
                    "tensor `{}`: unsupported dtype `{}` (expected {DTYPE})",
                    t.name, t.dtype
                )));
            }
            let blob = resolve(dir, &t.blob_path);
            let want = (t.rows * t.cols * 4) as u64;
            let got = file_len(&blob)?;
            if got != want {
                return Err(CliError::validation(format!(
                    "tensor `{}`: blob is {got} bytes, expected {want} for {}x{}",
                    t.name, t.rows, t.cols
                )));
            }
            hashed.push(blob);
            if let Some(b) = &t.bias_path {
                let path = resolve(dir, b);
                let got = file_len(&path)?;
                if got != (t.rows * 4) as u64 {
                    return Err(CliError::validation(format!(
                        "tensor `{}`: bias is {got} bytes, expected {}",
                        t.name,
                        t.rows * 4
                    )));
                }
                hashed.push(path);
            }
        }
        let hash = super::sha256_files(&head, &hashed)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            hash,
        })
    }

    pub fn entry(&self, name: &str) -> Option<&TensorEntry> {
        self.manifest.tensors.iter().find(|t| t.name == name)
    }

    /// Entries sorted by name.
    pub fn sorted_entries(&self) -> Vec<&TensorEntry> {
        let mut v: Vec<&TensorEntry> = self.manifest.tensors.iter().collect();
        v.sort_by(|a, b| a.name.cmp(&b.name));
        v
    }

    pub fn load(&self, entry: &TensorEntry) -> Result<WeightTensor> {
        let raw = f32_values(&read_bytes(&resolve(&self.dir, &entry.blob_path))?);
        if let Some(k) = raw.iter().position(|v| !v.is_finite()) {
            return Err(CliError::validation(format!(
                "tensor `{}`: non-finite value at row {}, column {}",
                entry.name,
                k / entry.cols.max(1),
                k % entry.cols.max(1)
            )));
        }
        let matrix = DenseMatrix::from_vec(entry.rows, entry.cols, raw.iter().map(|&v| v as f64).collect())?;
        let bias = match &entry.bias_path {
            Some(p) => {
                let b = f32_values(&read_bytes(&resolve(&self.dir, p))?);
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(CliError::validation(format!("tensor `{}`: non-finite bias", entry.name)));
                }
                Some(b.iter().map(|&v| v as f64).collect())
            }
            None => None,
        };
        Ok(WeightTensor {
            name: entry.name.clone(),
            matrix,
            bias,
        })
    }

    pub fn load_by_name(&self, name: &str) -> Result<WeightTensor> {
        let entry = self
            .entry(name)
            .ok_or_else(|| CliError::validation(format!("no tensor named `{name}`")))?;
        self.load(entry)
    }

    /// Writes a bundle; values are rounded to `f32`.
    pub fn write(dir: &Path, tensors: &[WeightTensor]) -> Result<WeightManifest> {
        Self::write_with_targets(dir, tensors, &[])
    }

    /// Like [`write`](Self::write), with an optional `calibrates` target per
    /// tensor (for activation bundles).
    pub fn write_with_targets(
        dir: &Path,
        tensors: &[WeightTensor],
        targets: &[Option<String>],
    ) -> Result<WeightManifest> {
        let mut entries = Vec::with_capacity(tensors.len());
        for (k, t) in tensors.iter().enumerate() {
            let blob_path = format!("tensor-{k:04}.f32");
            write_atomic(
                &dir.join(&blob_path),
                &f32_bytes(t.matrix.data().iter().map(|&v| v as f32)),
            )?;
            let bias_path = match &t.bias {
                Some(b) => {
                    let p = format!("tensor-{k:04}.bias.f32");
                    write_atomic(&dir.join(&p), &f32_bytes(b.iter().map(|&v| v as f32)))?;
                    Some(p)
                }
                None => None,
            };
            entries.push(TensorEntry {
                name: t.name.clone(),
                rows: t.matrix.rows(),
                cols: t.matrix.cols(),
                dtype: DTYPE.into(),
                blob_path,
                bias_path,
                calibrates: targets.get(k).cloned().flatten(),
            });
        }
        let manifest = WeightManifest {
            format_version: FORMAT_VERSION,
            tensors: entries,
        };
        write_manifest(dir, &manifest)?;
        Ok(manifest)
    }
}

/// Reads an activation blob (`samples × channels`, row-major) in fixed-size
/// chunks, handing each value to `visit(channel, value)`.
pub struct ActivationStream<'a> {
    pub bundle: &'a WeightBundle,
    pub entry: &'a TensorEntry,
}

const CHUNK_VALUES: usize = 1 << 14;

impl ActivationStream<'_> {
    pub fn for_each(&self, mut visit: impl FnMut(usize, f32) -> Result<()>) -> Result<()> {
        let path = resolve(&self.bundle.dir, &self.entry.blob_path);
        let file = fs::File::open(&path).map_err(|e| CliError::io(&path, e))?;
        let mut reader = BufReader::new(file);
        let channels = self.entry.cols.max(1);
        let mut buf = vec![0u8; CHUNK_VALUES * 4];
        let mut index = 0usize;
        loop {
            let n = read_full(&mut reader, &mut buf).map_err(|e| CliError::io(&path, e))?;
            if n % 4 != 0 {
                return Err(CliError::validation(format!(
                    "tensor `{}`: truncated blob",
                    self.entry.name
                )));
            }
            for v in f32_values(&buf[..n]) {
                visit(index % channels, v)?;
                index += 1;
            }
            if n < buf.len() {
                break;
            }
        }
        Ok(())
    }
}

fn read_full(r: &mut impl Read, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..])? {
            0 => break,
            n => filled += n,
        }
    }
    Ok(filled)
}
