#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::Parser;
use sslc::matrix::DenseMatrix;
use sslc::synthetic::Planted;
use sslc_cli::formats::{CalibrationStats, WeightBundle, WeightTensor};
use sslc_cli::{run, Cli, Result};

/// Rounds to the values an `f32` bundle can hold.
pub fn f32_exact(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| v as f32 as f64)
}

pub fn planted(rows: usize, cols: usize, rank: usize, seed: u64) -> DenseMatrix {
    f32_exact(&Planted::new(rows, cols, rank).generate(seed))
}

pub fn tensor(name: &str, matrix: DenseMatrix) -> WeightTensor {
    WeightTensor {
        name: name.into(),
        matrix,
        bias: None,
    }
}

pub fn write_weights(dir: &Path, tensors: &[WeightTensor]) {
    WeightBundle::write(dir, tensors).unwrap();
}

pub fn write_calib(dir: &Path, tensors: &[(&str, Vec<f64>)]) {
    let stats = tensors
        .iter()
        .map(|(n, v)| (n.to_string(), 1u64, v.iter().map(|&x| x as f32 as f64).collect()))
        .collect();
    CalibrationStats::write(dir, "test", stats).unwrap();
}

/// Norms spread over two orders of magnitude, deterministic in `cols`.
pub fn spread_norms(cols: usize) -> Vec<f64> {
    (0..cols).map(|j| 10f64.powf((j * 7 % cols) as f64 / cols as f64 * 2.0 - 1.0)).collect()
}

/// Runs a command in-process.
pub fn cli(args: &[&str]) -> Result<()> {
    let argv = std::iter::once("sslc").chain(args.iter().copied());
    run(Cli::try_parse_from(argv).expect("arguments parse"))
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sslc"))
}

/// Weights plus calibration for one planted 64×48 tensor `w`.
pub struct Fixture {
    pub root: tempfile::TempDir,
    pub weights: PathBuf,
    pub calib: PathBuf,
    pub w: DenseMatrix,
    pub norms: Vec<f64>,
}

impl Fixture {
    pub fn planted(rows: usize, cols: usize, rank: usize, seed: u64) -> Self {
        let root = tempfile::tempdir().unwrap();
        let weights = root.path().join("weights");
        let calib = root.path().join("calib");
        let w = planted(rows, cols, rank, seed);
        let norms: Vec<f64> = spread_norms(cols).iter().map(|&x| x as f32 as f64).collect();
        write_weights(&weights, &[tensor("w", w.clone())]);
        write_calib(&calib, &[("w", norms.clone())]);
        Self {
            root,
            weights,
            calib,
            w,
            norms,
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.path().join(name)
    }

    pub fn compress(&self, out: &str, extra: &[&str]) -> Result<PathBuf> {
        let out = self.path(out);
        {
            let mut args = vec!["compress", "--weights", p(&self.weights), "--calib", p(&self.calib), "--out", p(&out)];
            args.extend_from_slice(extra);
            cli(&args)?;
        }
        Ok(out)
    }
}
