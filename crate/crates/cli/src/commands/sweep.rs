//! Hyperparameter grids.
//!
//! Writes two files under the output directory:
//!
//! * `runs.csv`: one row per completed run, columns
//!   `tensor,remaining,rank,iters,preserve,seed,final_loss,relative_loss,one_shot,iterations_run`.
//! * `sweep.csv`: one row per configuration, aggregated over seeds, columns
//!   `tensor,remaining,rank,iters,preserve,runs,mean_loss,std_loss,mean_relative,std_relative`.
//!
//! `std` is the sample standard deviation (0 for a single run). Cells whose
//! plan is infeasible for a tensor are logged and skipped.

use std::fmt::Write as _;

use rayon::prelude::*;
use sslc::matrix::{ColumnScaling, DenseMatrix};
use sslc::optimizer::compress;

use super::plan_for;
use crate::error::{CliError, Result};
use crate::formats::{write_atomic, CalibrationStats, RunFlags, WeightBundle};
use crate::pool::worker_pool;
use crate::SweepArgs;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub tensor: String,
    pub remaining: f64,
    pub rank: usize,
    pub iters: usize,
    pub preserve: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub cell: Cell,
    pub final_loss: f64,
    pub relative_loss: f64,
    pub one_shot: f64,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub tensor: String,
    pub remaining: f64,
    pub rank: usize,
    pub iters: usize,
    pub preserve: f64,
    pub runs: usize,
    pub mean_loss: f64,
    pub std_loss: f64,
    pub mean_relative: f64,
    pub std_relative: f64,
}

pub fn run(args: &SweepArgs) -> Result<()> {
    for (what, empty) in [
        ("--remaining-list", args.remaining_list.is_empty()),
        ("--rank-list", args.rank_list.is_empty()),
        ("--iters-list", args.iters_list.is_empty()),
        ("--preserve-list", args.preserve_list.is_empty()),
        ("--seed-list", args.seed_list.is_empty()),
    ] {
        if empty {
            return Err(CliError::validation(format!("{what} must not be empty")));
        }
    }
    let weights = WeightBundle::open(&args.weights)?;
    let calib = CalibrationStats::open(&args.calib)?;
    let mut inputs = Vec::new();
    for entry in weights.sorted_entries() {
        let w = weights.load(entry)?;
        let scaling = calib.scaling(&entry.name, entry.cols, args.solver.epsilon)?;
        inputs.push((entry.name.clone(), w.matrix, scaling));
    }
    let cells = grid(args, &inputs);
    let runs = run_cells(&cells, &inputs, args)?;
    let aggregates = aggregate(&runs);
    write_atomic(&args.out.join("runs.csv"), runs_csv(&runs).as_bytes())?;
    write_atomic(&args.out.join("sweep.csv"), sweep_csv(&aggregates).as_bytes())?;
    log::info!("{} runs in {} configurations", runs.len(), aggregates.len());
    Ok(())
}

fn grid(args: &SweepArgs, inputs: &[(String, DenseMatrix, ColumnScaling)]) -> Vec<Cell> {
    let mut cells = Vec::new();
    for (name, _, _) in inputs {
        for &remaining in &args.remaining_list {
            for &rank in &args.rank_list {
                for &iters in &args.iters_list {
                    for &preserve in &args.preserve_list {
                        for &seed in &args.seed_list {
                            cells.push(Cell {
                                tensor: name.clone(),
                                remaining,
                                rank,
                                iters,
                                preserve,
                                seed,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

fn run_cells(
    cells: &[Cell],
    inputs: &[(String, DenseMatrix, ColumnScaling)],
    args: &SweepArgs,
) -> Result<Vec<RunResult>> {
    let pool = worker_pool()?;
    let outcomes: Vec<Result<Option<RunResult>>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let (_, w, scaling) = inputs.iter().find(|(n, _, _)| *n == cell.tensor).expect("cell tensor");
                run_cell(cell, w, scaling, args)
            })
            .collect()
    });
    let mut runs = Vec::new();
    for outcome in outcomes {
        if let Some(r) = outcome? {
            runs.push(r);
        }
    }
    Ok(runs)
}

fn run_cell(cell: &Cell, w: &DenseMatrix, scaling: &ColumnScaling, args: &SweepArgs) -> Result<Option<RunResult>> {
    let flags = RunFlags::new(cell.remaining, Some(cell.rank), cell.preserve, cell.iters, cell.seed, &args.solver);
    let plan = plan_for(&cell.tensor, w.rows(), w.cols(), &flags);
    match compress(w, scaling, &plan) {
        Ok(layer) => {
            let trace = &layer.meta.trace;
            let final_loss = layer.meta.final_loss;
            Ok(Some(RunResult {
                cell: cell.clone(),
                final_loss,
                relative_loss: if trace.raw_initial > 0.0 {
                    final_loss / trace.raw_initial
                } else {
                    0.0
                },
                one_shot: trace.one_shot,
                iterations_run: trace.records.len(),
            }))
        }
        Err(e @ sslc::Error::InfeasiblePlan(_)) => {
            log::warn!(
                "skipping {} remaining={} rank={} iters={} preserve={} seed={}: {e}",
                cell.tensor,
                cell.remaining,
                cell.rank,
                cell.iters,
                cell.preserve,
                cell.seed
            );
            Ok(None)
        }
        Err(e) => Err(CliError::from(e).for_tensor(&cell.tensor)),
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Groups consecutive runs that differ only in seed (the grid puts seeds
/// innermost).
pub fn aggregate(runs: &[RunResult]) -> Vec<Aggregate> {
    let same_config = |a: &Cell, b: &Cell| {
        a.tensor == b.tensor
            && a.remaining == b.remaining
            && a.rank == b.rank
            && a.iters == b.iters
            && a.preserve == b.preserve
    };
    let mut out = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let mut end = start + 1;
        while end < runs.len() && same_config(&runs[start].cell, &runs[end].cell) {
            end += 1;
        }
        let group = &runs[start..end];
        let losses: Vec<f64> = group.iter().map(|r| r.final_loss).collect();
        let relative: Vec<f64> = group.iter().map(|r| r.relative_loss).collect();
        let (mean_loss, std_loss) = mean_std(&losses);
        let (mean_relative, std_relative) = mean_std(&relative);
        let c = &group[0].cell;
        out.push(Aggregate {
            tensor: c.tensor.clone(),
            remaining: c.remaining,
            rank: c.rank,
            iters: c.iters,
            preserve: c.preserve,
            runs: group.len(),
            mean_loss,
            std_loss,
            mean_relative,
            std_relative,
        });
        start = end;
    }
    out
}

pub const RUNS_HEADER: &str =
    "tensor,remaining,rank,iters,preserve,seed,final_loss,relative_loss,one_shot,iterations_run";
pub const SWEEP_HEADER: &str =
    "tensor,remaining,rank,iters,preserve,runs,mean_loss,std_loss,mean_relative,std_relative";

pub fn runs_csv(runs: &[RunResult]) -> String {
    let mut s = format!("{RUNS_HEADER}\n");
    for r in runs {
        let c = &r.cell;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            c.tensor, c.remaining, c.rank, c.iters, c.preserve, c.seed, r.final_loss, r.relative_loss, r.one_shot,
            r.iterations_run
        );
    }
    s
}

pub fn sweep_csv(rows: &[Aggregate]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for a in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            a.tensor,
            a.remaining,
            a.rank,
            a.iters,
            a.preserve,
            a.runs,
            a.mean_loss,
            a.std_loss,
            a.mean_relative,
            a.std_relative
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
    }

    fn result(rank: usize, seed: u64, loss: f64) -> RunResult {
        RunResult {
            cell: Cell {
                tensor: "w".into(),
                remaining: 0.5,
                rank,
                iters: 10,
                preserve: 0.01,
                seed,
            },
            final_loss: loss,
            relative_loss: loss / 10.0,
            one_shot: 9.0,
            iterations_run: 10,
        }
    }

    #[test]
    fn aggregates_over_seeds_only() {
        let runs = [result(1, 0, 1.0), result(1, 1, 3.0), result(2, 0, 5.0)];
        let agg = aggregate(&runs);
        assert_eq!(agg.len(), 2);
        assert_eq!((agg[0].runs, agg[0].mean_loss), (2, 2.0));
        assert_eq!((agg[1].runs, agg[1].std_loss), (1, 0.0));
    }
}
