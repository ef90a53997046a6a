//! Whole-GEMM execution over engine-sized tiles.
//!
//! Tiles are visited c-tile major, k-tile minor. Every A row is issued once
//! per tile, including rows with no entries in that k-slice (bubbles).
//! Different c-tiles touch disjoint output columns, so with
//! [`Execution::Parallel`] each c-tile runs on its own engine instance; the
//! cycle totals are the same as one engine visiting every tile in turn.

use super::trace::PipelineTrace;
use super::{DemmConfig, DemmEngine};
use crate::error::{DemmError, Result};
use crate::functional::{ktile_slice, plan_tiles, slice_row_for_ktile, GemmDims, TilePlan};
use crate::matrix::DenseMatrix;
use crate::par::{self, Execution};
use crate::report::CycleReport;
use crate::sparse::{Entry, PackedSparseMatrix};

#[derive(Debug, Clone)]
pub struct GemmRun {
    pub output: DenseMatrix<i32>,
    pub report: CycleReport,
    /// Present when tracing was requested.
    pub trace: Option<PipelineTrace>,
}

/// Simulates `a * b` on one engine configuration.
pub fn run_gemm(
    a: &PackedSparseMatrix,
    b: &DenseMatrix<i16>,
    cfg: DemmConfig,
) -> Result<(DenseMatrix<i32>, CycleReport)> {
    let run = run_gemm_with(a, b, cfg, Execution::default(), false)?;
    Ok((run.output, run.report))
}

/// As [`run_gemm`]; `trace = true` forces a single sequential engine and
/// returns its cycle trace.
pub fn run_gemm_with(
    a: &PackedSparseMatrix,
    b: &DenseMatrix<i16>,
    cfg: DemmConfig,
    exec: Execution,
    trace: bool,
) -> Result<GemmRun> {
    let plan = plan_for(a, b, &cfg)?;
    let k_slices: Vec<Vec<Vec<Entry>>> = (0..plan.k_tiles)
        .map(|kt| {
            a.row_entries()
                .iter()
                .map(|row| slice_row_for_ktile(row, kt, cfg.m()))
                .collect()
        })
        .collect();

    let mut output = DenseMatrix::<i32>::zeros(a.rows(), b.cols());
    let mut report = CycleReport::new(cfg.multipliers() as u64);
    let mut trace_out = None;

    if trace {
        let mut engine = DemmEngine::new(cfg);
        engine.enable_trace();
        for ct in 0..plan.c_tiles {
            let (acc, rep) = run_ctile(&mut engine, &plan, &k_slices, b, ct)?;
            scatter(&mut output, &acc, plan.c_range(ct).start);
            report += rep;
        }
        trace_out = engine.take_trace();
    } else {
        let tiles = par::map_range(exec, plan.c_tiles, |ct| {
            let mut engine = DemmEngine::new(cfg);
            run_ctile(&mut engine, &plan, &k_slices, b, ct)
        });
        for (ct, tile) in tiles.into_iter().enumerate() {
            let (acc, rep) = tile?;
            scatter(&mut output, &acc, plan.c_range(ct).start);
            report += rep;
        }
    }

    Ok(GemmRun {
        output,
        report,
        trace: trace_out,
    })
}

fn plan_for(a: &PackedSparseMatrix, b: &DenseMatrix<i16>, cfg: &DemmConfig) -> Result<TilePlan> {
    if a.cols() != b.rows() {
        return Err(DemmError::DimensionMismatch(format!(
            "A is {}x{} but B is {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let dims = GemmDims::new(a.rows(), a.cols(), b.cols())?;
    Ok(plan_tiles(dims, cfg.m(), cfg.c()))
}

fn run_ctile(
    engine: &mut DemmEngine,
    plan: &TilePlan,
    k_slices: &[Vec<Vec<Entry>>],
    b: &DenseMatrix<i16>,
    ct: usize,
) -> Result<(DenseMatrix<i32>, CycleReport)> {
    let cr = plan.c_range(ct);
    let mut acc = DenseMatrix::<i32>::zeros(plan.dims.r, cr.len());
    let mut report = CycleReport::new(engine.config().multipliers() as u64);
    for (kt, rows) in k_slices.iter().enumerate() {
        let kr = plan.k_range(kt);
        let tile = b.sub_block(kr.start, cr.start, kr.len(), cr.len());
        let preload = engine.preload(&tile)?;
        let mut frag = engine.schedule_matrix(rows, &mut acc)?;
        frag.preload_cycles = preload;
        frag.total_cycles += preload;
        report += frag;
    }
    Ok((acc, report))
}

fn scatter(out: &mut DenseMatrix<i32>, tile: &DenseMatrix<i32>, col0: usize) {
    for r in 0..tile.rows() {
        out.row_mut(r)[col0..col0 + tile.cols()].copy_from_slice(tile.row(r));
    }
}

/// Cycle counts of [`run_gemm`] without moving any data: they depend only on
/// the shape and on how many entries each row has in each k-slice.
pub fn gemm_timing(a: &PackedSparseMatrix, cdim: usize, cfg: DemmConfig) -> Result<CycleReport> {
    let dims = GemmDims::new(a.rows(), a.cols(), cdim)?;
    let plan = plan_tiles(dims, cfg.m(), cfg.c());
    let n = cfg.n();
    let mut issue_per_pass = 0u64;
    for kt in 0..plan.k_tiles {
        issue_per_pass += a
            .row_entries()
            .iter()
            .map(|row| ktile_slice(row, kt, cfg.m()).len().div_ceil(n).max(1) as u64)
            .sum::<u64>();
    }
    let c_tiles = plan.c_tiles as u64;
    let preload = c_tiles * dims.kdim as u64;
    let compute = c_tiles * issue_per_pass;
    let drain = plan.tile_count() as u64 * cfg.pipeline_depth() as u64;
    Ok(CycleReport {
        preload_cycles: preload,
        compute_cycles: compute,
        drain_cycles: drain,
        total_cycles: preload + compute + drain,
        issued_row_ops: compute,
        useful_macs: a.nnz() as u64 * cdim as u64,
        mac_units: cfg.multipliers() as u64,
        approximate_baseline: false,
    })
}
