use rayon::prelude::*;
use sslc::layer::CompressedLayer;
use sslc::optimizer::{compress, loss_of};

use super::plan_for;
use crate::error::{CliError, Result};
use crate::formats::{
    quantize, record_for, CalibrationStats, CompressedBundle, CompressedManifest, RunFlags, TensorEntry, WeightBundle,
    BLOB, FORMAT_VERSION,
};
use crate::pool::worker_pool;
use crate::CompressArgs;

pub fn run(args: &CompressArgs) -> Result<CompressedManifest> {
    let weights = WeightBundle::open(&args.weights)?;
    let calib = CalibrationStats::open(&args.calib)?;
    let flags = RunFlags::new(args.remaining, args.rank, args.preserve, args.iters, args.seed, &args.solver);
    let mut bundle = compress_bundle(&weights, &calib, &flags)?;
    bundle.save(&args.out)?;
    log::info!("wrote {} tensors to {}", bundle.layers.len(), args.out.display());
    Ok(bundle.manifest)
}

/// Compresses one tensor and rounds the result to `f32` storage.
pub fn compress_entry(
    weights: &WeightBundle,
    calib: &CalibrationStats,
    entry: &TensorEntry,
    flags: &RunFlags,
) -> Result<CompressedLayer> {
    let tensor = weights.load(entry)?;
    let scaling = calib.scaling(&entry.name, entry.cols, flags.epsilon)?;
    let plan = plan_for(&entry.name, entry.rows, entry.cols, flags);
    let mut layer = compress(&tensor.matrix, &scaling, &plan)?;
    layer.bias = tensor.bias;
    quantize(&layer)
}

/// Compresses every tensor on the worker pool. Layers come back sorted by
/// name whatever order the workers finish in; the first failing tensor in
/// that order decides the error.
pub fn compress_bundle(weights: &WeightBundle, calib: &CalibrationStats, flags: &RunFlags) -> Result<CompressedBundle> {
    let entries = weights.sorted_entries();
    let pool = worker_pool()?;
    let results: Vec<Result<CompressedLayer>> = pool.install(|| {
        entries
            .par_iter()
            .map(|e| compress_entry(weights, calib, e, flags).map_err(|err| err.for_tensor(&e.name)))
            .collect()
    });
    let mut layers = Vec::with_capacity(entries.len());
    let mut tensors = Vec::with_capacity(entries.len());
    for (entry, result) in entries.iter().zip(results) {
        let layer = result?;
        let tensor = weights.load(entry)?;
        let scaling = calib.scaling(&entry.name, entry.cols, flags.epsilon)?;
        let stored_loss = loss_of(&tensor.matrix, &layer.s, &layer.factors, &scaling)?;
        if !stored_loss.is_finite() {
            return Err(CliError::Numerical(format!("tensor `{}`: stored loss is not finite", entry.name)));
        }
        tensors.push(record_for(&entry.name, &layer, stored_loss));
        layers.push(layer);
    }
    Ok(CompressedBundle {
        manifest: CompressedManifest {
            format_version: FORMAT_VERSION,
            blob_path: BLOB.into(),
            weights_hash: weights.hash.clone(),
            calibration_hash: calib.hash.clone(),
            flags: flags.clone(),
            tensors,
        },
        layers,
    })
}
