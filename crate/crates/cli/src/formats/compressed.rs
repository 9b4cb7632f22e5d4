use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sslc::layer::{CompressedLayer, LayerMeta};
use sslc::lowrank::{LowRankFactors, RightSketch};
use sslc::matrix::{DenseMatrix, SparseMatrix};
use sslc::optimizer::{Budget, CompressionPlan, ConvergenceTrace, ProjectionSchedule};

use super::{check_version, f32_values, read_bytes, write_atomic, write_manifest, FORMAT_VERSION};
use crate::error::{CliError, Result};

pub const BLOB: &str = "tensors.bin";

/// Byte range inside `tensors.bin`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub offset: u64,
    pub length: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sections {
    /// `u64` LE, `rows + 1` entries.
    pub row_offsets: Section,
    /// `u32` LE, one per nonzero.
    pub col_indices: Section,
    /// `f32` LE, one per nonzero.
    pub values: Section,
    /// `f32` LE, `rows × rank`, row-major.
    pub u: Section,
    /// `f32` LE, `cols × rank`, row-major.
    pub v: Section,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Section>,
}

/// Command-line settings a bundle was produced with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFlags {
    pub remaining: f64,
    /// `None` when the rank was derived from each tensor's shape.
    pub rank: Option<usize>,
    pub preserve: f64,
    pub iters: usize,
    pub seed: u64,
    pub power_iters: usize,
    pub epsilon: f64,
    pub projection: ProjectionSchedule,
    pub right_sketch: RightSketch,
    pub safeguard: bool,
    pub early_stop: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: [usize; 2],
    pub rank: usize,
    /// Sparse density `(k − preserve)` of the plan.
    pub density: f64,
    pub preserve_fraction: f64,
    pub remaining_fraction: f64,
    pub seed: u64,
    pub iterations: usize,
    pub nnz: usize,
    /// Loss reported by the optimizer in 64-bit arithmetic.
    pub final_loss: f64,
    /// Loss recomputed from the stored `f32` parts.
    pub stored_loss: f64,
    pub plan: CompressionPlan,
    pub budget: Budget,
    pub trace: ConvergenceTrace,
    pub sections: Sections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedManifest {
    pub format_version: u32,
    pub blob_path: String,
    pub weights_hash: String,
    pub calibration_hash: String,
    pub flags: RunFlags,
    pub tensors: Vec<TensorRecord>,
}

/// Rounds every stored value to `f32`. Sparse entries that round to zero
/// are dropped so the CSR invariants hold on reload.
pub fn quantize(layer: &CompressedLayer) -> Result<CompressedLayer> {
    let round = |v: f64| -> Result<f64> {
        let r = v as f32;
        if !r.is_finite() {
            return Err(CliError::Numerical(format!("value {v:e} overflows f32 storage")));
        }
        Ok(r as f64)
    };
    let (m, n) = layer.shape();
    let mut offsets = Vec::with_capacity(m + 1);
    let mut cols = Vec::with_capacity(layer.s.nnz());
    let mut vals = Vec::with_capacity(layer.s.nnz());
    offsets.push(0);
    let ro = layer.s.row_offsets();
    for i in 0..m {
        for k in ro[i]..ro[i + 1] {
            let v = round(layer.s.values()[k])?;
            if v != 0.0 {
                cols.push(layer.s.col_indices()[k]);
                vals.push(v);
            }
        }
        offsets.push(cols.len());
    }
    let s = SparseMatrix::from_csr(m, n, offsets, cols, vals)?;
    let quant = |d: &DenseMatrix| -> Result<DenseMatrix> {
        let data = d.data().iter().map(|&v| round(v)).collect::<Result<Vec<_>>>()?;
        Ok(DenseMatrix::from_vec(d.rows(), d.cols(), data)?)
    };
    let factors = LowRankFactors::new(quant(layer.factors.u())?, quant(layer.factors.v())?)?;
    let bias = match &layer.bias {
        Some(b) => Some(b.iter().map(|&v| round(v)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    Ok(CompressedLayer {
        s,
        factors,
        bias,
        meta: layer.meta.clone(),
    })
}

/// A compressed bundle in memory: the manifest and one layer per record,
/// in manifest order.
#[derive(Debug, Clone)]
pub struct CompressedBundle {
    pub manifest: CompressedManifest,
    pub layers: Vec<CompressedLayer>,
}

fn push_section(blob: &mut Vec<u8>, bytes: &[u8]) -> Section {
    let s = Section {
        offset: blob.len() as u64,
        length: bytes.len() as u64,
    };
    blob.extend_from_slice(bytes);
    s
}

fn f32_le(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect()
}

impl CompressedBundle {
    /// Serializes the layers into one blob and refreshes every record's
    /// section table. Layers must already be `f32`-exact.
    fn encode(&mut self) -> Result<Vec<u8>> {
        if self.manifest.tensors.len() != self.layers.len() {
            return Err(CliError::validation("manifest and layer count differ"));
        }
        let mut blob = Vec::new();
        for (record, layer) in self.manifest.tensors.iter_mut().zip(&self.layers) {
            let offsets: Vec<u8> = layer
                .s
                .row_offsets()
                .iter()
                .flat_map(|&o| (o as u64).to_le_bytes())
                .collect();
            let cols = layer
                .s
                .col_indices()
                .iter()
                .map(|&c| u32::try_from(c).map(u32::to_le_bytes))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| CliError::validation(format!("tensor `{}`: column index exceeds u32", record.name)))?
                .concat();
            record.sections = Sections {
                row_offsets: push_section(&mut blob, &offsets),
                col_indices: push_section(&mut blob, &cols),
                values: push_section(&mut blob, &f32_le(layer.s.values())),
                u: push_section(&mut blob, &f32_le(layer.factors.u().data())),
                v: push_section(&mut blob, &f32_le(layer.factors.v().data())),
                bias: layer.bias.as_ref().map(|b| push_section(&mut blob, &f32_le(b))),
            };
        }
        Ok(blob)
    }

    pub fn save(&mut self, dir: &Path) -> Result<()> {
        self.manifest.blob_path = BLOB.into();
        let blob = self.encode()?;
        write_atomic(&dir.join(BLOB), &blob)?;
        write_manifest(dir, &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CompressedManifest = super::read_manifest(dir)?;
        check_version(manifest.format_version, dir)?;
        let blob = read_bytes(&dir.join(&manifest.blob_path))?;
        let layers = manifest
            .tensors
            .iter()
            .map(|r| decode_layer(r, &blob).map_err(|e| e.for_tensor(&r.name)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { manifest, layers })
    }

    pub fn layer(&self, name: &str) -> Option<(&TensorRecord, &CompressedLayer)> {
        self.manifest
            .tensors
            .iter()
            .zip(&self.layers)
            .find(|(r, _)| r.name == name)
    }

    pub fn dir_blob(dir: &Path) -> PathBuf {
        dir.join(BLOB)
    }
}

fn slice<'a>(blob: &'a [u8], s: &Section, unit: u64, count: usize, what: &str) -> Result<&'a [u8]> {
    if s.length != unit * count as u64 {
        return Err(CliError::validation(format!(
            "{what}: section is {} bytes, expected {}",
            s.length,
            unit * count as u64
        )));
    }
    let end = s.offset.checked_add(s.length).filter(|&e| e <= blob.len() as u64);
    match end {
        Some(end) => Ok(&blob[s.offset as usize..end as usize]),
        None => Err(CliError::validation(format!("{what}: section runs past the blob"))),
    }
}

fn decode_layer(r: &TensorRecord, blob: &[u8]) -> Result<CompressedLayer> {
    let [m, n] = r.shape;
    let s = &r.sections;
    let offsets: Vec<usize> = slice(blob, &s.row_offsets, 8, m + 1, "row_offsets")?
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8 bytes")) as usize)
        .collect();
    let cols: Vec<usize> = slice(blob, &s.col_indices, 4, r.nnz, "col_indices")?
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
        .collect();
    let to_f64 = |b: &[u8]| -> Vec<f64> { f32_values(b).into_iter().map(|v| v as f64).collect() };
    let values = to_f64(slice(blob, &s.values, 4, r.nnz, "values")?);
    let sparse = SparseMatrix::from_csr(m, n, offsets, cols, values)?;
    let u = DenseMatrix::from_vec(m, r.rank, to_f64(slice(blob, &s.u, 4, m * r.rank, "u")?))?;
    let v = DenseMatrix::from_vec(n, r.rank, to_f64(slice(blob, &s.v, 4, n * r.rank, "v")?))?;
    let bias = match &s.bias {
        Some(b) => Some(to_f64(slice(blob, b, 4, m, "bias")?)),
        None => None,
    };
    Ok(CompressedLayer {
        s: sparse,
        factors: LowRankFactors::new(u, v)?,
        bias,
        meta: LayerMeta {
            rows: m,
            cols: n,
            plan: r.plan.clone(),
            budget: r.budget,
            final_loss: r.final_loss,
            trace: r.trace.clone(),
            format_version: FORMAT_VERSION,
        },
    })
}

/// Record for a freshly compressed (and quantized) layer. Sections are
/// filled in on save.
pub fn record_for(name: &str, layer: &CompressedLayer, stored_loss: f64) -> TensorRecord {
    let (m, n) = layer.shape();
    let plan = &layer.meta.plan;
    let empty = Section { offset: 0, length: 0 };
    TensorRecord {
        name: name.to_string(),
        shape: [m, n],
        rank: layer.factors.rank(),
        density: layer.meta.budget.sparse_density,
        preserve_fraction: plan.preserve_fraction,
        remaining_fraction: plan.remaining_fraction,
        seed: plan.seed,
        iterations: plan.iterations,
        nnz: layer.s.nnz(),
        final_loss: layer.meta.final_loss,
        stored_loss,
        plan: plan.clone(),
        budget: layer.meta.budget,
        trace: layer.meta.trace.clone(),
        sections: Sections {
            row_offsets: empty,
            col_indices: empty,
            values: empty,
            u: empty,
            v: empty,
            bias: None,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sslc::matrix::ColumnScaling;
    use sslc::optimizer::compress;

    fn bundle() -> CompressedBundle {
        let w = DenseMatrix::from_fn(12, 10, |i, j| ((i * 7 + j * 3) as f64).sin() * 1e-3 + (i == j) as u8 as f64);
        let mut layer = compress(&w, &ColumnScaling::unit(10), &CompressionPlan::new(0.6, 1).with_iterations(5)).unwrap();
        layer.bias = Some((0..12).map(|i| i as f64 / 3.0).collect());
        let q = quantize(&layer).unwrap();
        let record = record_for("w", &q, 0.0);
        CompressedBundle {
            manifest: CompressedManifest {
                format_version: FORMAT_VERSION,
                blob_path: BLOB.into(),
                weights_hash: "w".into(),
                calibration_hash: "c".into(),
                flags: RunFlags {
                    remaining: 0.6,
                    rank: Some(1),
                    preserve: 0.01,
                    iters: 5,
                    seed: 0,
                    power_iters: 2,
                    epsilon: 1e-8,
                    projection: ProjectionSchedule::Fresh,
                    right_sketch: RightSketch::GoDec,
                    safeguard: true,
                    early_stop: true,
                },
                tensors: vec![record],
            },
            layers: vec![q],
        }
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let mut original = bundle();
        original.save(&a).unwrap();
        let mut loaded = CompressedBundle::load(&a).unwrap();
        assert_eq!(loaded.layers[0].to_dense(), original.layers[0].to_dense());
        assert_eq!(loaded.layers[0].bias, original.layers[0].bias);
        loaded.save(&b).unwrap();
        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(
            String::from_utf8(read(&a, super::super::MANIFEST)).unwrap(),
            String::from_utf8(read(&b, super::super::MANIFEST)).unwrap()
        );
        assert!(read(&a, BLOB) == read(&b, BLOB), "blob differs");
    }

    #[test]
    fn truncated_blob_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        bundle().save(dir.path()).unwrap();
        let blob = CompressedBundle::dir_blob(dir.path());
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 4]).unwrap();
        assert_eq!(CompressedBundle::load(dir.path()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn quantize_drops_underflowing_entries() {
        let s = SparseMatrix::from_csr(1, 2, vec![0, 2], vec![0, 1], vec![1e-60, 2.0]).unwrap();
        let layer = CompressedLayer::from_parts(s, LowRankFactors::zeros(1, 2, 0), None).unwrap();
        let q = quantize(&layer).unwrap();
        assert_eq!(q.s.nnz(), 1);
        assert_eq!(q.to_dense(), layer.to_dense().map(|v| v as f32 as f64));
    }
}
