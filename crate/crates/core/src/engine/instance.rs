use super::memory::EngineMemory;
use super::pipeline::{Pipeline, PortGroup};
use super::trace::{PipelineTrace, Stage};
use super::DemmConfig;
use crate::error::{DemmError, Result};
use crate::matrix::DenseMatrix;
use crate::report::CycleReport;
use crate::sparse::Entry;

/// One engine instance: memory, datapath pipeline and a cycle counter.
///
/// Usage per tile is `preload`, then a [`ComputeSession`] that issues A rows
/// and is drained at the end. The session mutably borrows the engine, so a
/// preload cannot be started while rows are in flight.
#[derive(Debug)]
pub struct DemmEngine {
    cfg: DemmConfig,
    memory: EngineMemory,
    pipeline: Pipeline,
    loaded: bool,
    now: u64,
    trace: Option<PipelineTrace>,
}

impl DemmEngine {
    pub fn new(cfg: DemmConfig) -> Self {
        Self {
            cfg,
            memory: EngineMemory::new(cfg.m(), cfg.c()),
            pipeline: Pipeline::new(cfg.n(), cfg.reduce_levels(), cfg.c()),
            loaded: false,
            now: 0,
            trace: None,
        }
    }

    pub fn config(&self) -> &DemmConfig {
        &self.cfg
    }

    pub fn memory(&self) -> &EngineMemory {
        &self.memory
    }

    /// Cycles elapsed since construction.
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(PipelineTrace::default);
    }

    pub fn trace(&self) -> Option<&PipelineTrace> {
        self.trace.as_ref()
    }

    pub fn take_trace(&mut self) -> Option<PipelineTrace> {
        self.trace.take()
    }

    /// Drops anything in flight and forgets the loaded tile.
    pub fn reset(&mut self) {
        self.pipeline.clear();
        self.loaded = false;
    }

    /// Writes `tile` into memory one row per cycle; returns the cycles spent
    /// (the tile's row count).
    pub fn preload(&mut self, tile: &DenseMatrix<i16>) -> Result<u64> {
        if self.pipeline.is_busy() {
            return Err(DemmError::PreloadDuringCompute);
        }
        self.memory.clear_for(tile.rows(), tile.cols())?;
        for r in 0..tile.rows() {
            self.memory.write_row(r, tile.row(r));
            if let Some(t) = self.trace.as_mut() {
                t.push(self.now, Stage::Preload, format!("row={},cols={}", r, tile.cols()));
            }
            self.now += 1;
        }
        self.loaded = true;
        Ok(tile.rows() as u64)
    }

    /// Starts issuing rows against the preloaded tile. `acc` receives the
    /// output rows (read-modify-write) and must be as wide as the tile.
    pub fn begin<'a>(&'a mut self, acc: &'a mut DenseMatrix<i32>) -> Result<ComputeSession<'a>> {
        if !self.loaded {
            return Err(DemmError::NotPreloaded);
        }
        if self.pipeline.is_busy() {
            return Err(DemmError::InvalidArgument(
                "previous session was not drained; reset the engine".into(),
            ));
        }
        if acc.cols() != self.memory.loaded_cols() {
            return Err(DemmError::DimensionMismatch(format!(
                "accumulator has {} columns, tile has {}",
                acc.cols(),
                self.memory.loaded_cols()
            )));
        }
        Ok(ComputeSession {
            engine: self,
            acc,
            report: CycleReport::default(),
        })
    }

    /// Issues every row of a tile-local A slice into `acc`, then drains.
    /// The returned fragment has no preload cycles.
    pub fn schedule_matrix(
        &mut self,
        rows: &[Vec<Entry>],
        acc: &mut DenseMatrix<i32>,
    ) -> Result<CycleReport> {
        let mut session = self.begin(acc)?;
        for (i, row) in rows.iter().enumerate() {
            session.issue_row(i, row)?;
        }
        Ok(session.drain())
    }

    fn step(&mut self, incoming: Option<PortGroup>, acc: &mut DenseMatrix<i32>) {
        self.pipeline
            .step(self.now, incoming, &self.memory, acc, self.trace.as_mut());
        self.now += 1;
    }
}

/// Rows in flight against one preloaded tile.
#[derive(Debug)]
pub struct ComputeSession<'a> {
    engine: &'a mut DemmEngine,
    acc: &'a mut DenseMatrix<i32>,
    report: CycleReport,
}

impl ComputeSession<'_> {
    /// Issues one A row (tile-local column indexes) into output row `row`.
    /// Returns the port-issue cycles it used, `max(1, ceil(e / n))`.
    pub fn issue_row(&mut self, row: usize, entries: &[Entry]) -> Result<u64> {
        let cfg = self.engine.cfg;
        if row >= self.acc.rows() {
            return Err(DemmError::DimensionMismatch(format!(
                "output row {row} outside accumulator of {} rows",
                self.acc.rows()
            )));
        }
        if let Some(e) = entries.iter().find(|e| e.col >= cfg.m()) {
            return Err(DemmError::ColumnOutOfRange {
                col: e.col,
                limit: cfg.m(),
            });
        }
        let groups = entries.len().div_ceil(cfg.n()).max(1);
        for g in 0..groups {
            let lo = (g * cfg.n()).min(entries.len());
            let hi = (lo + cfg.n()).min(entries.len());
            let group = PortGroup {
                row,
                index: g,
                of: groups,
                entries: entries[lo..hi].to_vec(),
            };
            self.engine.step(Some(group), self.acc);
        }
        let cycles = groups as u64;
        self.report.compute_cycles += cycles;
        self.report.issued_row_ops += cycles;
        self.report.useful_macs += (entries.len() * self.acc.cols()) as u64;
        Ok(cycles)
    }

    /// Steps the pipeline until empty and returns the session's timing.
    pub fn drain(self) -> CycleReport {
        let mut report = self.report;
        while self.engine.pipeline.is_busy() {
            self.engine.step(None, self.acc);
            report.drain_cycles += 1;
        }
        report.total_cycles = report.compute_cycles + report.drain_cycles;
        report.mac_units = self.engine.cfg.multipliers() as u64;
        report
    }
}
