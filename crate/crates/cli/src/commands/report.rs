//! Per-tensor report tables.
//!
//! CSV output is long-format with the stable header
//! `tensor,section,key,index,value`. `index` is the iteration for `trace`
//! rows, the sample number for `retention` curve rows and 0 elsewhere.
//! Sections and keys:
//!
//! | section | keys |
//! |---|---|
//! | `trace` | `after_lowrank`, `after_sparsify`, `pct_of_raw`, `pct_of_one_shot`, `rejected` |
//! | `budget` | `remaining_fraction`, `sparse_density`, `lowrank_share`, `preserve_fraction`, `rank`, `nnz`, `realized_fraction` |
//! | `loss` | `raw_initial`, `one_shot`, `final_loss`, `stored_loss`, `recomputed`, `relative`, `iterations_run` |
//! | `retention` | `kept_fraction`, `retained`, `fraction_for_salience_80` |
//! | `cost` | `dense`, `sparse`, `lowrank`, `sum`, `speedup`, `speedup_2dp` |
//! | `reconstruction` | `frobenius_error`, `relative_error`, `surrogate_loss` |
//!
//! Reference modules from `--cost-calibration` appear as `cost` rows whose
//! `tensor` column is the module label.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sslc::layer::{cost_report, reconstruction_report, CompressedLayer, CostModel, CostReport, ReconstructionReport};
use sslc::matrix::DenseMatrix;
use sslc::optimizer::{loss_of, StepOutcome};
use sslc::salience::{fraction_for_salience, retention_curve, salience_of};

use crate::error::{CliError, Result};
use crate::formats::{
    read_bytes, write_atomic, CalibrationStats, CompressedBundle, TensorRecord, WeightBundle, FORMAT_VERSION,
};
use crate::{ReportArgs, ReportFormat};

/// Contents of a `--cost-calibration` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostCalibration {
    #[serde(default = "unit")]
    pub overhead_factor: f64,
    #[serde(default)]
    pub modules: Vec<ReferenceModule>,
}

fn unit() -> f64 {
    1.0
}

/// Externally measured cycle counts for one module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceModule {
    pub label: String,
    pub dense: f64,
    pub sparse: f64,
    pub lowrank: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub after_lowrank: f64,
    pub after_sparsify: f64,
    pub pct_of_raw: f64,
    pub pct_of_one_shot: f64,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetRow {
    pub remaining_fraction: f64,
    pub sparse_density: f64,
    pub lowrank_share: f64,
    pub preserve_fraction: f64,
    pub rank: usize,
    pub nnz: usize,
    /// Stored parameters over `m·n`.
    pub realized_fraction: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossRow {
    pub raw_initial: f64,
    pub one_shot: f64,
    pub final_loss: f64,
    pub stored_loss: f64,
    /// Surrogate loss recomputed from the bundle, weights and calibration.
    pub recomputed: f64,
    /// `recomputed / raw_initial`.
    pub relative: f64,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RetentionRow {
    pub curve: Vec<(f64, f64)>,
    pub fraction_for_salience_80: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    #[serde(flatten)]
    pub report: CostReport,
    pub speedup_2dp: f64,
}

impl From<CostReport> for CostRow {
    fn from(report: CostReport) -> Self {
        Self {
            speedup_2dp: report.speedup_2dp(),
            report,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub trace: Vec<TraceRow>,
    pub budget: BudgetRow,
    pub loss: LossRow,
    pub retention: RetentionRow,
    pub cost: CostRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction: Option<ReconstructionReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceCost {
    pub label: String,
    #[serde(flatten)]
    pub cost: CostRow,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub format_version: u32,
    pub overhead_factor: f64,
    pub tensors: Vec<TensorReport>,
    pub reference_costs: Vec<ReferenceCost>,
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let bundle = CompressedBundle::load(&args.bundle)?;
    let weights = WeightBundle::open(&args.weights)?;
    let calib = CalibrationStats::open(&args.calib)?;
    let eval = args.eval.as_deref().map(WeightBundle::open).transpose()?;
    let costs = match &args.cost_calibration {
        Some(p) => load_cost_calibration(p)?,
        None => CostCalibration {
            overhead_factor: 1.0,
            modules: Vec::new(),
        },
    };
    let report = build(&bundle, &weights, &calib, eval.as_ref(), &costs, args.retention_points)?;
    let text = match args.format {
        ReportFormat::Csv => to_csv(&report),
        ReportFormat::Json => crate::formats::manifest_text(&report)?,
    };
    match &args.out {
        Some(path) => write_atomic(path, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn load_cost_calibration(path: &Path) -> Result<CostCalibration> {
    let bytes = read_bytes(path)?;
    let c: CostCalibration = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::validation(format!("{}: malformed cost calibration: {e}", path.display())))?;
    if !(c.overhead_factor.is_finite() && c.overhead_factor >= 0.0) {
        return Err(CliError::validation("overhead_factor must be finite and non-negative"));
    }
    Ok(c)
}

pub fn build(
    bundle: &CompressedBundle,
    weights: &WeightBundle,
    calib: &CalibrationStats,
    eval: Option<&WeightBundle>,
    costs: &CostCalibration,
    retention_points: usize,
) -> Result<Report> {
    let model = CostModel {
        overhead_factor: costs.overhead_factor,
    };
    let epsilon = bundle.manifest.flags.epsilon;
    let mut tensors = Vec::with_capacity(bundle.layers.len());
    for (record, layer) in bundle.manifest.tensors.iter().zip(&bundle.layers) {
        let name = &record.name;
        let w = weights
            .load_by_name(name)
            .map_err(|_| CliError::validation(format!("tensor `{name}` is in the bundle but not in the weights")))?;
        if w.matrix.shape() != layer.shape() {
            return Err(CliError::validation(format!(
                "tensor `{name}`: bundle shape {:?} differs from weights {:?}",
                layer.shape(),
                w.matrix.shape()
            )));
        }
        let scaling = calib.scaling(name, layer.shape().1, epsilon)?;
        let recomputed = loss_of(&w.matrix, &layer.s, &layer.factors, &scaling)?;
        let sal = salience_of(&w.matrix, &scaling)?;
        let reconstruction = match eval {
            Some(e) => eval_activations(e, name, layer.shape().1)?
                .map(|x| reconstruction_report(layer, &w.matrix, &x))
                .transpose()
                .map_err(|e| CliError::from(e).for_tensor(name))?,
            None => None,
        };
        tensors.push(TensorReport {
            name: name.clone(),
            trace: trace_rows(record),
            budget: budget_row(record, layer),
            loss: LossRow {
                raw_initial: record.trace.raw_initial,
                one_shot: record.trace.one_shot,
                final_loss: record.final_loss,
                stored_loss: record.stored_loss,
                recomputed,
                relative: ratio(recomputed, record.trace.raw_initial),
                iterations_run: record.trace.records.len(),
            },
            retention: RetentionRow {
                curve: retention_curve(&sal, retention_points),
                fraction_for_salience_80: fraction_for_salience(&sal, 0.8)?,
            },
            cost: cost_report(layer, &model).map_err(|e| CliError::from(e).for_tensor(name))?.into(),
            reconstruction,
        });
    }
    let reference_costs = costs
        .modules
        .iter()
        .map(|m| {
            let report = CostReport::from_costs(m.dense, m.sparse, m.lowrank)
                .map_err(|e| CliError::validation(format!("cost module `{}`: {e}", m.label)))?;
            Ok(ReferenceCost {
                label: m.label.clone(),
                cost: report.into(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Report {
        format_version: FORMAT_VERSION,
        overhead_factor: costs.overhead_factor,
        tensors,
        reference_costs,
    })
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

fn trace_rows(record: &TensorRecord) -> Vec<TraceRow> {
    let t = &record.trace;
    t.records
        .iter()
        .map(|r| TraceRow {
            iteration: r.iteration,
            after_lowrank: r.after_lowrank,
            after_sparsify: r.after_sparsify,
            pct_of_raw: 100.0 * ratio(r.after_sparsify, t.raw_initial),
            pct_of_one_shot: 100.0 * ratio(r.after_sparsify, t.one_shot),
            outcome: r.outcome,
        })
        .collect()
}

fn budget_row(record: &TensorRecord, layer: &CompressedLayer) -> BudgetRow {
    BudgetRow {
        remaining_fraction: record.remaining_fraction,
        sparse_density: record.budget.sparse_density,
        lowrank_share: record.budget.lowrank_share,
        preserve_fraction: record.budget.preserve_fraction,
        rank: record.rank,
        nnz: record.nnz,
        realized_fraction: layer.parameter_fraction(),
    }
}

/// Every eval batch targeting `name`, stacked into `channels × samples`.
fn eval_activations(eval: &WeightBundle, name: &str, channels: usize) -> Result<Option<DenseMatrix>> {
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); channels];
    let mut found = false;
    for entry in eval.manifest.tensors.iter().filter(|e| e.target() == name) {
        if entry.cols != channels {
            return Err(CliError::validation(format!(
                "eval batch `{}` has {} channels, tensor `{name}` has {channels} inputs",
                entry.name, entry.cols
            )));
        }
        let batch = eval.load(entry)?;
        for t in 0..batch.matrix.rows() {
            for (j, v) in batch.matrix.row(t).iter().enumerate() {
                columns[j].push(*v);
            }
        }
        found = true;
    }
    if !found {
        return Ok(None);
    }
    let samples = columns[0].len();
    Ok(Some(DenseMatrix::from_vec(channels, samples, columns.concat())?))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub const CSV_HEADER: &str = "tensor,section,key,index,value";

pub fn to_csv(report: &Report) -> String {
    let mut out = String::new();
    out.push_str(CSV_HEADER);
    out.push('\n');
    let mut row = |tensor: &str, section: &str, key: &str, index: usize, value: f64| {
        let _ = writeln!(out, "{},{section},{key},{index},{value}", csv_field(tensor));
    };
    for t in &report.tensors {
        let n = t.name.as_str();
        for r in &t.trace {
            row(n, "trace", "after_lowrank", r.iteration, r.after_lowrank);
            row(n, "trace", "after_sparsify", r.iteration, r.after_sparsify);
            row(n, "trace", "pct_of_raw", r.iteration, r.pct_of_raw);
            row(n, "trace", "pct_of_one_shot", r.iteration, r.pct_of_one_shot);
            let rejected = (r.outcome == StepOutcome::Rejected) as u8 as f64;
            row(n, "trace", "rejected", r.iteration, rejected);
        }
        let b = &t.budget;
        row(n, "budget", "remaining_fraction", 0, b.remaining_fraction);
        row(n, "budget", "sparse_density", 0, b.sparse_density);
        row(n, "budget", "lowrank_share", 0, b.lowrank_share);
        row(n, "budget", "preserve_fraction", 0, b.preserve_fraction);
        row(n, "budget", "rank", 0, b.rank as f64);
        row(n, "budget", "nnz", 0, b.nnz as f64);
        row(n, "budget", "realized_fraction", 0, b.realized_fraction);
        let l = &t.loss;
        row(n, "loss", "raw_initial", 0, l.raw_initial);
        row(n, "loss", "one_shot", 0, l.one_shot);
        row(n, "loss", "final_loss", 0, l.final_loss);
        row(n, "loss", "stored_loss", 0, l.stored_loss);
        row(n, "loss", "recomputed", 0, l.recomputed);
        row(n, "loss", "relative", 0, l.relative);
        row(n, "loss", "iterations_run", 0, l.iterations_run as f64);
        for (k, (kept, retained)) in t.retention.curve.iter().enumerate() {
            row(n, "retention", "kept_fraction", k, *kept);
            row(n, "retention", "retained", k, *retained);
        }
        row(n, "retention", "fraction_for_salience_80", 0, t.retention.fraction_for_salience_80);
        cost_rows(&mut row, n, &t.cost);
        if let Some(r) = &t.reconstruction {
            row(n, "reconstruction", "frobenius_error", 0, r.frobenius_error);
            row(n, "reconstruction", "relative_error", 0, r.relative_error);
            row(n, "reconstruction", "surrogate_loss", 0, r.surrogate_loss);
        }
    }
    for m in &report.reference_costs {
        cost_rows(&mut row, &m.label, &m.cost);
    }
    out
}

fn cost_rows(row: &mut impl FnMut(&str, &str, &str, usize, f64), name: &str, c: &CostRow) {
    row(name, "cost", "dense", 0, c.report.dense);
    row(name, "cost", "sparse", 0, c.report.sparse);
    row(name, "cost", "lowrank", 0, c.report.lowrank);
    row(name, "cost", "sum", 0, c.report.sum);
    row(name, "cost", "speedup", 0, c.report.speedup);
    row(name, "cost", "speedup_2dp", 0, c.speedup_2dp);
}
