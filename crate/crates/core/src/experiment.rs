//! Layer sweeps: run every (layer, engine) pair, verify engine output
//! against the functional reference and collect report rows.
//!
//! Layers are independent jobs and may run concurrently; rows always come
//! back ordered by layer index, then engines in the order given, then
//! baselines.

use std::io::Write;

use serde::{Serialize, Serializer};

use crate::baselines::{systolic_cycles, BaselineSpec};
use crate::engine::{density_support, gemm_timing, run_gemm_with, DemmConfig, PipelineTrace};
use crate::error::Result;
use crate::functional::{rowwise_sparse_matmul_with, GemmDims};
use crate::matrix::DenseMatrix;
use crate::par::{self, Execution};
use crate::report::CycleReport;
use crate::sparse::{PackedSparseMatrix, SparsityPattern};
use crate::workloads::{lower_layer, synthesize_activations, synthesize_weights, LayerSpec, WeightMode};

/// Bumped whenever a CSV column is added, removed or reordered.
pub const SCHEMA_VERSION: u32 = 1;

pub const RUN_COLUMNS: &[&str] = &[
    "schema_version",
    "layer_index",
    "layer",
    "engine",
    "pattern",
    "pattern_supported",
    "r",
    "kdim",
    "cdim",
    "preload_cycles",
    "compute_cycles",
    "drain_cycles",
    "total_cycles",
    "issued_row_ops",
    "mac_units",
    "useful_macs",
    "mac_utilization",
    "verified",
    "approximate_baseline",
];

pub const SWEEP_COLUMNS: &[&str] = &[
    "schema_version",
    "pattern",
    "engine",
    "layers",
    "preload_cycles",
    "compute_cycles",
    "drain_cycles",
    "total_cycles",
    "issued_row_ops",
    "mac_units",
    "useful_macs",
    "mac_utilization",
    "verified",
    "approximate_baseline",
];

pub const CAVEATS: &[&str] = &[
    "Cycle counts are the primary metric; no clock frequency is applied.",
    "Baseline rows model generic systolic arrays with an idealised sparsity speedup; they are approximate and are not cycle models of any published sparse accelerator.",
    "Engine drain is a fixed pipeline depth of read + multiply + ceil(log2 N) reduce levels + accumulate per tile.",
    "Engine feed bandwidth for packed A entries and their addresses is assumed ideal.",
    "Partial sums across k-tiles accumulate in the output buffer at no modelled cost; preload and compute do not overlap.",
    "Weights are synthesised to the requested pattern (or Poisson block counts) and activations are random; latency depends only on shapes and weight structure.",
    "Latency deltas and area/power figures of published accelerators are not reproduced.",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verification {
    Passed,
    Failed,
    Skipped,
    NotApplicable,
}

impl Verification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verification::Passed => "true",
            Verification::Failed => "false",
            Verification::Skipped => "skipped",
            Verification::NotApplicable => "n/a",
        }
    }

    fn combine(self, other: Self) -> Self {
        use Verification::*;
        match (self, other) {
            (Failed, _) | (_, Failed) => Failed,
            (Skipped, _) | (_, Skipped) => Skipped,
            (Passed, _) | (_, Passed) => Passed,
            _ => NotApplicable,
        }
    }
}

impl Serialize for Verification {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub schema_version: u32,
    pub layer_index: usize,
    pub layer: String,
    pub engine: String,
    pub pattern: String,
    /// Empty for baselines and overflow-mode weights.
    pub pattern_supported: Option<bool>,
    pub r: usize,
    pub kdim: usize,
    pub cdim: usize,
    pub preload_cycles: u64,
    pub compute_cycles: u64,
    pub drain_cycles: u64,
    pub total_cycles: u64,
    pub issued_row_ops: u64,
    pub mac_units: u64,
    pub useful_macs: u64,
    pub mac_utilization: f64,
    pub verified: Verification,
    pub approximate_baseline: bool,
}

impl ResultRow {
    #[allow(clippy::too_many_arguments)]
    fn new(
        index: usize,
        name: &str,
        engine: String,
        pattern: String,
        dims: GemmDims,
        report: &CycleReport,
        verified: Verification,
        pattern_supported: Option<bool>,
    ) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            layer_index: index,
            layer: name.to_string(),
            engine,
            pattern,
            pattern_supported,
            r: dims.r,
            kdim: dims.kdim,
            cdim: dims.cdim,
            preload_cycles: report.preload_cycles,
            compute_cycles: report.compute_cycles,
            drain_cycles: report.drain_cycles,
            total_cycles: report.total_cycles,
            issued_row_ops: report.issued_row_ops,
            mac_units: report.mac_units,
            useful_macs: report.useful_macs,
            mac_utilization: report.mac_utilization(),
            verified,
            approximate_baseline: report.approximate_baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub schema_version: u32,
    pub pattern: String,
    pub engine: String,
    pub layers: usize,
    pub preload_cycles: u64,
    pub compute_cycles: u64,
    pub drain_cycles: u64,
    pub total_cycles: u64,
    pub issued_row_ops: u64,
    pub mac_units: u64,
    pub useful_macs: u64,
    pub mac_utilization: f64,
    pub verified: Verification,
    pub approximate_baseline: bool,
}

/// One GEMM to run: either synthesised from a layer or given explicitly.
#[derive(Debug, Clone)]
pub enum Job {
    Layer(LayerSpec),
    Gemm { name: String, dims: GemmDims },
    Explicit {
        name: String,
        a: PackedSparseMatrix,
        b: DenseMatrix<i16>,
    },
}

impl Job {
    fn name(&self) -> &str {
        match self {
            Job::Layer(l) => &l.name,
            Job::Gemm { name, .. } | Job::Explicit { name, .. } => name,
        }
    }

    fn dims(&self) -> GemmDims {
        match self {
            Job::Layer(l) => lower_layer(l),
            Job::Gemm { dims, .. } => *dims,
            Job::Explicit { a, b, .. } => GemmDims {
                r: a.rows(),
                kdim: a.cols(),
                cdim: b.cols(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub engines: Vec<DemmConfig>,
    pub baselines: Vec<BaselineSpec>,
    pub weights: WeightMode,
    pub seed: u64,
    pub verify: bool,
    /// Record a cycle trace for the first job on the first engine.
    pub trace: bool,
    pub exec: Execution,
}

#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub trace: Option<PipelineTrace>,
}

impl RunOutput {
    pub fn all_verified(&self) -> bool {
        !self.rows.iter().any(|r| r.verified == Verification::Failed)
    }
}

/// Per-job seed; distinct layers get unrelated streams.
pub fn job_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn pattern_label(mode: &WeightMode) -> String {
    match mode {
        WeightMode::Pattern(p) => p.to_string(),
        WeightMode::Overflow { block, mean } => format!("poisson(mean={mean})/{block}"),
    }
}

impl Experiment {
    pub fn run(&self, jobs: &[Job]) -> Result<RunOutput> {
        let indexed: Vec<(usize, &Job)> = jobs.iter().enumerate().collect();
        let per_job = par::map(self.exec, &indexed, |&(i, job)| self.run_job(i, job));
        let mut out = RunOutput::default();
        for res in per_job {
            let (rows, trace) = res?;
            out.rows.extend(rows);
            if out.trace.is_none() {
                out.trace = trace;
            }
        }
        Ok(out)
    }

    fn run_job(&self, index: usize, job: &Job) -> Result<(Vec<ResultRow>, Option<PipelineTrace>)> {
        let dims = job.dims();
        let seed = job_seed(self.seed, index);
        let label = match job {
            Job::Explicit { .. } => match self.weights {
                WeightMode::Pattern(p) => format!("pruned {p}"),
                _ => "file".to_string(),
            },
            _ => pattern_label(&self.weights),
        };
        let a_owned;
        let a = match job {
            Job::Explicit { a, .. } => a,
            _ => {
                a_owned = synthesize_weights(dims, self.weights, seed)?;
                &a_owned
            }
        };
        let want_data = self.verify || (self.trace && index == 0);
        let b_owned;
        let b = match job {
            Job::Explicit { b, .. } => Some(b),
            _ if want_data => {
                b_owned = synthesize_activations(dims, seed);
                Some(&b_owned)
            }
            _ => None,
        };
        let reference = match (self.verify, b) {
            (true, Some(b)) => Some(rowwise_sparse_matmul_with(a, b, self.exec)?),
            _ => None,
        };

        let mut rows = Vec::with_capacity(self.engines.len() + self.baselines.len());
        let mut trace = None;
        for (e, cfg) in self.engines.iter().enumerate() {
            let tracing = self.trace && index == 0 && e == 0;
            let supported = self
                .weights
                .pattern()
                .map(|p| density_support(cfg, p).is_supported());
            let (report, verified) = match b {
                Some(b) if self.verify || tracing => {
                    let exec = if tracing { Execution::Sequential } else { self.exec };
                    let run = run_gemm_with(a, b, *cfg, exec, tracing)?;
                    if tracing {
                        trace = run.trace;
                    }
                    let v = match &reference {
                        Some(r) if *r == run.output => Verification::Passed,
                        Some(_) => Verification::Failed,
                        None => Verification::Skipped,
                    };
                    (run.report, v)
                }
                _ => (gemm_timing(a, dims.cdim, *cfg)?, Verification::Skipped),
            };
            rows.push(ResultRow::new(
                index,
                job.name(),
                cfg.to_string(),
                label.clone(),
                dims,
                &report,
                verified,
                supported,
            ));
        }
        for base in &self.baselines {
            let cfg = base.config_for(self.weights.pattern())?;
            let report = systolic_cycles(dims, &cfg);
            rows.push(ResultRow::new(
                index,
                job.name(),
                base.to_string(),
                label.clone(),
                dims,
                &report,
                Verification::NotApplicable,
                None,
            ));
        }
        Ok((rows, trace))
    }

    /// Runs the same jobs at each pattern and sums every engine over jobs.
    pub fn sweep(&self, jobs: &[Job], patterns: &[SparsityPattern]) -> Result<Vec<SummaryRow>> {
        let mut out = Vec::new();
        for &p in patterns {
            let exp = Experiment {
                weights: WeightMode::Pattern(p),
                trace: false,
                ..self.clone()
            };
            let run = exp.run(jobs)?;
            out.extend(summarize(&run.rows));
        }
        Ok(out)
    }
}

/// Sums rows per (pattern, engine), keeping first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    for r in rows {
        let slot = match out
            .iter_mut()
            .position(|s| s.pattern == r.pattern && s.engine == r.engine)
        {
            Some(i) => &mut out[i],
            None => {
                out.push(SummaryRow {
                    schema_version: SCHEMA_VERSION,
                    pattern: r.pattern.clone(),
                    engine: r.engine.clone(),
                    layers: 0,
                    preload_cycles: 0,
                    compute_cycles: 0,
                    drain_cycles: 0,
                    total_cycles: 0,
                    issued_row_ops: 0,
                    mac_units: r.mac_units,
                    useful_macs: 0,
                    mac_utilization: 0.0,
                    verified: r.verified,
                    approximate_baseline: r.approximate_baseline,
                });
                out.last_mut().expect("just pushed")
            }
        };
        slot.layers += 1;
        slot.preload_cycles += r.preload_cycles;
        slot.compute_cycles += r.compute_cycles;
        slot.drain_cycles += r.drain_cycles;
        slot.total_cycles += r.total_cycles;
        slot.issued_row_ops += r.issued_row_ops;
        slot.useful_macs += r.useful_macs;
        slot.verified = slot.verified.combine(r.verified);
    }
    for s in &mut out {
        let slots = s.total_cycles as f64 * s.mac_units as f64;
        s.mac_utilization = if slots > 0.0 { s.useful_macs as f64 / slots } else { 0.0 };
    }
    out
}

pub fn write_csv<T: Serialize>(rows: &[T], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r).map_err(csv_err)?;
    }
    wr.flush().map_err(|e| crate::DemmError::InvalidArgument(e.to_string()))?;
    Ok(())
}

fn csv_err(e: csv::Error) -> crate::DemmError {
    crate::DemmError::InvalidArgument(format!("csv: {e}"))
}

#[derive(Serialize)]
struct JsonReport<'a, T> {
    schema_version: u32,
    kind: &'a str,
    caveats: &'a [&'a str],
    rows: &'a [T],
}

pub fn write_json<T: Serialize>(kind: &str, rows: &[T], w: impl Write) -> Result<()> {
    let doc = JsonReport {
        schema_version: SCHEMA_VERSION,
        kind,
        caveats: CAVEATS,
        rows,
    };
    serde_json::to_writer_pretty(w, &doc)
        .map_err(|e| crate::DemmError::InvalidArgument(format!("json: {e}")))
}
