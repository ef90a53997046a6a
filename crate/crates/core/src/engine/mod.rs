//! Cycle-stepped model of one `DeMM(N, M, C, k)` engine.
//!
//! Dataflow is input-stationary. A B-tile of up to `M` rows by `C` columns
//! is written into an `M x C` memory through its single write port, one row
//! per cycle. Packed rows of A then stream through `N` read ports: each
//! entry's column index addresses a memory row, the `C` values read are
//! multiplied by the entry's value, and `C` pipelined `N`-to-1 reduction
//! trees sum the per-port products into the output row. A row with more than
//! `N` entries reuses the ports for `ceil(e / N)` consecutive cycles.
//!
//! Timing model:
//!
//! * preload: one cycle per written tile row;
//! * compute: one issue cycle per port group, `max(1, ceil(e / N))` per row
//!   (an empty row still costs one bubble);
//! * drain: the pipeline depth `D = 1 + 1 + ceil(log2 N) + 1` (read,
//!   multiply, reduce levels, accumulate), paid once per tile after the last
//!   issue.
//!
//! Preload and compute never overlap. Partial sums across k-tiles are
//! accumulated in the output buffer at no modelled cost. The `k`-to-1 port
//! multiplexer is folded into the issue stage, and feed bandwidth into the
//! engine is assumed ideal.

mod instance;
mod gemm;
mod memory;
mod pipeline;
mod trace;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{DemmError, Result};
use crate::sparse::SparsityPattern;

pub use instance::{ComputeSession, DemmEngine};
pub use gemm::{gemm_timing, run_gemm, run_gemm_with, GemmRun};
pub use memory::EngineMemory;
pub use trace::{PipelineTrace, Stage, TraceEvent};

/// Engine instantiation `DeMM(n, m, c, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DemmConfig {
    n: usize,
    m: usize,
    c: usize,
    k: usize,
}

impl DemmConfig {
    pub fn new(n: usize, m: usize, c: usize, k: usize) -> Result<Self> {
        if n == 0 || m == 0 || c == 0 || k == 0 {
            return Err(DemmError::InvalidConfig(format!(
                "DeMM({n},{m},{c},{k}): all parameters must be >= 1"
            )));
        }
        if k * n > m {
            return Err(DemmError::InvalidConfig(format!(
                "DeMM({n},{m},{c},{k}): k*n = {} exceeds m",
                k * n
            )));
        }
        Ok(Self { n, m, c, k })
    }

    /// Read ports.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Memory depth (rows of the B-tile).
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Memory width (output columns computed in parallel).
    #[inline]
    pub fn c(&self) -> usize {
        self.c
    }

    /// Port time-share factor.
    #[inline]
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn multipliers(&self) -> usize {
        self.n * self.c
    }

    pub fn reduction_trees(&self) -> usize {
        self.c
    }

    /// Inputs per reduction tree.
    pub fn reduction_fan_in(&self) -> usize {
        self.n
    }

    /// Levels of the pairwise adder tree, `ceil(log2 n)`.
    pub fn reduce_levels(&self) -> usize {
        ceil_log2(self.n)
    }

    /// Read, multiply, reduce levels, accumulate.
    pub fn pipeline_depth(&self) -> usize {
        3 + self.reduce_levels()
    }

    /// Densest pattern served natively, `k*n : m`.
    pub fn max_density(&self) -> SparsityPattern {
        SparsityPattern::new(self.k * self.n, self.m).expect("validated in new")
    }
}

impl fmt::Display for DemmConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "demm:{},{},{},{}", self.n, self.m, self.c, self.k)
    }
}

impl FromStr for DemmConfig {
    type Err = DemmError;

    /// Parses `demm:N,M,C,k` (the `demm:` prefix is optional).
    fn from_str(s: &str) -> Result<Self> {
        let body = s.strip_prefix("demm:").unwrap_or(s);
        let bad = || DemmError::InvalidArgument(format!("engine `{s}` is not demm:N,M,C,k"));
        let v: Vec<usize> = body
            .split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?;
        let [n, m, c, k] = v[..] else {
            return Err(bad());
        };
        Self::new(n, m, c, k)
    }
}

pub(crate) fn ceil_log2(x: usize) -> usize {
    debug_assert!(x > 0);
    (usize::BITS - (x - 1).leading_zeros()) as usize
}

/// Whether a pattern runs on an engine at native throughput.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensitySupport {
    /// Rescaled to `equivalent_n : m` it fits within `k*n` non-zeros per row tile.
    Supported { equivalent_n: usize },
    /// Denser than `k*n : m`; would need a time-share factor of `required_k`.
    TooDense { equivalent_n: usize, required_k: usize },
    /// The pattern's block width does not divide the engine depth.
    BlockMismatch,
}

impl DensitySupport {
    pub fn is_supported(&self) -> bool {
        matches!(self, DensitySupport::Supported { .. })
    }
}

pub fn density_support(cfg: &DemmConfig, p: SparsityPattern) -> DensitySupport {
    if !cfg.m.is_multiple_of(p.m()) {
        return DensitySupport::BlockMismatch;
    }
    let equivalent_n = p.n() * (cfg.m / p.m());
    if equivalent_n <= cfg.k * cfg.n {
        DensitySupport::Supported { equivalent_n }
    } else {
        DensitySupport::TooDense {
            equivalent_n,
            required_k: equivalent_n.div_ceil(cfg.n),
        }
    }
}

/// True iff `p`, rescaled to block width `cfg.m`, needs at most `k*n`
/// non-zeros per row.
pub fn reconfigure_density_check(cfg: &DemmConfig, p: SparsityPattern) -> bool {
    density_support(cfg, p).is_supported()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize, m: usize, c: usize, k: usize) -> DemmConfig {
        DemmConfig::new(n, m, c, k).unwrap()
    }

    fn pat(n: usize, m: usize) -> SparsityPattern {
        SparsityPattern::new(n, m).unwrap()
    }

    #[test]
    fn config_invariants() {
        assert!(DemmConfig::new(0, 8, 4, 1).is_err());
        assert!(DemmConfig::new(4, 8, 4, 4).is_err());
        assert!(DemmConfig::new(9, 8, 4, 1).is_err());
        let c = cfg(8, 128, 64, 8);
        assert_eq!(c.multipliers(), 512);
        assert_eq!(c.reduction_trees(), 64);
        assert_eq!(c.pipeline_depth(), 6);
        assert_eq!(c.max_density(), pat(64, 128));
        assert_eq!(cfg(1, 4, 4, 1).pipeline_depth(), 3);
        assert_eq!(cfg(3, 8, 4, 1).pipeline_depth(), 5);
    }

    #[test]
    fn parse_and_display() {
        let c: DemmConfig = "demm:8,128,64,8".parse().unwrap();
        assert_eq!(c, cfg(8, 128, 64, 8));
        assert_eq!(c.to_string(), "demm:8,128,64,8");
        assert!("demm:8,128,64".parse::<DemmConfig>().is_err());
        assert!("demm:a,b,c,d".parse::<DemmConfig>().is_err());
    }

    #[test]
    fn ceil_log2_values() {
        let got: Vec<usize> = [1, 2, 3, 4, 5, 8, 9, 16].iter().map(|&x| ceil_log2(x)).collect();
        assert_eq!(got, vec![0, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn reconfiguration_cases() {
        let small = cfg(4, 64, 16, 4);
        assert!(reconfigure_density_check(&small, pat(4, 16)));
        assert!(reconfigure_density_check(&small, pat(4, 32)));
        assert_eq!(
            density_support(&small, pat(4, 8)),
            DensitySupport::TooDense {
                equivalent_n: 32,
                required_k: 8
            }
        );
        let big = cfg(8, 128, 64, 8);
        assert!(reconfigure_density_check(&big, pat(1, 2)));
        assert!(reconfigure_density_check(&big, pat(8, 128)));
        assert!(!reconfigure_density_check(&big, pat(3, 4)));
        assert_eq!(density_support(&big, pat(1, 3)), DensitySupport::BlockMismatch);
    }
}
