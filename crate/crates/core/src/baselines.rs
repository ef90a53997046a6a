//! Analytical latency models of conventional systolic arrays.
//!
//! These are generic weight-/output-stationary arrays with an idealised
//! structured-sparsity speedup. They are comparison points for trends only
//! and are not cycle models of any published sparse accelerator; every report
//! they produce has `approximate_baseline = true`.
//!
//! With a `rows x cols` PE array and inner dimension `K' = ceil(K / s)` for
//! sparsity speedup `s`:
//!
//! **Weight-stationary.** A `rows x cols` block of the weight matrix (inner
//! dimension down the array rows, output channels across the columns) is
//! resident; activations for the `C` output columns stream through.
//!
//! * fill = `rows` (one weight row shifted in per cycle),
//! * stream = `C` (one activation vector enters per cycle),
//! * drain = `rows + cols - 1` (the last vector's skewed wavefront crosses
//!   the array diagonally),
//! * tiles = `ceil(K' / rows) * ceil(R / cols)`.
//!
//! **Output-stationary.** Each PE owns one output; a `rows x cols` block of
//! `R x C` outputs is computed per tile while both operands stream for `K'`
//! steps.
//!
//! * fill = `rows + cols - 2` (input skew before the far corner PE starts),
//! * stream = `K'`,
//! * drain = `rows` (finished outputs shift out one row per cycle),
//! * tiles = `ceil(R / rows) * ceil(C / cols)`.
//!
//! Structured sparsity is modelled as index-matched skipping: an `N:M`
//! pattern gives `s = M / N`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DemmError, Result};
use crate::functional::GemmDims;
use crate::report::CycleReport;
use crate::sparse::SparsityPattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Dataflow {
    WeightStationary,
    OutputStationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystolicConfig {
    pub rows: usize,
    pub cols: usize,
    pub dataflow: Dataflow,
    /// Reduction factor on the inner dimension; 1 for dense.
    pub sparsity_speedup: f64,
}

impl SystolicConfig {
    pub fn new(rows: usize, cols: usize, dataflow: Dataflow, sparsity_speedup: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(DemmError::InvalidConfig(format!("systolic array {rows}x{cols}")));
        }
        if !(sparsity_speedup >= 1.0 && sparsity_speedup.is_finite()) {
            return Err(DemmError::InvalidConfig(format!(
                "sparsity speedup {sparsity_speedup} must be >= 1"
            )));
        }
        Ok(Self {
            rows,
            cols,
            dataflow,
            sparsity_speedup,
        })
    }

    pub fn dense(rows: usize, cols: usize, dataflow: Dataflow) -> Result<Self> {
        Self::new(rows, cols, dataflow, 1.0)
    }

    pub fn mac_units(&self) -> usize {
        self.rows * self.cols
    }

    fn effective_k(&self, kdim: usize) -> u64 {
        // The epsilon keeps exact quotients such as 128 / 16 from rounding up.
        ((kdim as f64 / self.sparsity_speedup) - 1e-9).ceil().max(1.0) as u64
    }
}

pub fn systolic_cycles(dims: GemmDims, cfg: &SystolicConfig) -> CycleReport {
    let (rows, cols) = (cfg.rows as u64, cfg.cols as u64);
    let k = cfg.effective_k(dims.kdim);
    let (r, c) = (dims.r as u64, dims.cdim as u64);
    let (tiles, fill, stream, drain) = match cfg.dataflow {
        Dataflow::WeightStationary => (
            k.div_ceil(rows) * r.div_ceil(cols),
            rows,
            c,
            rows + cols - 1,
        ),
        Dataflow::OutputStationary => (
            r.div_ceil(rows) * c.div_ceil(cols),
            rows + cols - 2,
            k,
            rows,
        ),
    };
    CycleReport {
        preload_cycles: tiles * fill,
        compute_cycles: tiles * stream,
        drain_cycles: tiles * drain,
        total_cycles: tiles * (fill + stream + drain),
        issued_row_ops: tiles * stream,
        useful_macs: r * k * c,
        mac_units: rows * cols,
        approximate_baseline: true,
    }
}

/// Command-line baseline description: `dense-ws:32x16`, `sparse-os:32x16`, ...
///
/// `sparse-*` kinds take their speedup from the workload's pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BaselineSpec {
    pub sparse: bool,
    pub dataflow: Dataflow,
    pub rows: usize,
    pub cols: usize,
}

impl BaselineSpec {
    pub fn config_for(&self, pattern: Option<SparsityPattern>) -> Result<SystolicConfig> {
        let speedup = match (self.sparse, pattern) {
            (true, Some(p)) => p.m() as f64 / p.n() as f64,
            _ => 1.0,
        };
        SystolicConfig::new(self.rows, self.cols, self.dataflow, speedup)
    }
}

impl fmt::Display for BaselineSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.sparse { "sparse" } else { "dense" };
        let df = match self.dataflow {
            Dataflow::WeightStationary => "ws",
            Dataflow::OutputStationary => "os",
        };
        write!(f, "{kind}-{df}:{}x{}", self.rows, self.cols)
    }
}

impl FromStr for BaselineSpec {
    type Err = DemmError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || {
            DemmError::InvalidArgument(format!(
                "baseline `{s}` is not <dense|sparse>-<ws|os>:<rows>x<cols>"
            ))
        };
        let (kind, shape) = s.split_once(':').ok_or_else(bad)?;
        let (sparse, dataflow) = match kind {
            "dense-ws" => (false, Dataflow::WeightStationary),
            "dense-os" => (false, Dataflow::OutputStationary),
            "sparse-ws" => (true, Dataflow::WeightStationary),
            "sparse-os" => (true, Dataflow::OutputStationary),
            _ => return Err(bad()),
        };
        let (rows, cols) = shape.split_once(['x', 'X']).ok_or_else(bad)?;
        let rows: usize = rows.parse().map_err(|_| bad())?;
        let cols: usize = cols.parse().map_err(|_| bad())?;
        if rows == 0 || cols == 0 {
            return Err(bad());
        }
        Ok(Self {
            sparse,
            dataflow,
            rows,
            cols,
        })
    }
}
