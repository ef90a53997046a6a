//! Cycle accounting shared by the engine model and the baselines.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Timing breakdown of one run.
///
/// `total_cycles = preload_cycles + compute_cycles + drain_cycles`.
/// For the engine, `preload` counts write-port cycles, `compute` counts
/// port-issue cycles and `drain` counts pipeline-emptying cycles. Baselines
/// map fill / stream / drain onto the same three fields.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleReport {
    pub preload_cycles: u64,
    pub compute_cycles: u64,
    pub drain_cycles: u64,
    pub total_cycles: u64,
    /// Port-issue cycles (engine) or streamed vectors (baselines).
    pub issued_row_ops: u64,
    /// Multiplications that contributed a non-zero operand pair slot.
    pub useful_macs: u64,
    /// Multiplier count of the modelled hardware.
    pub mac_units: u64,
    pub approximate_baseline: bool,
}

impl CycleReport {
    pub fn new(mac_units: u64) -> Self {
        Self {
            mac_units,
            ..Self::default()
        }
    }

    /// Useful multiplies over available multiplier-cycles, in [0, 1].
    pub fn mac_utilization(&self) -> f64 {
        let slots = self.total_cycles as f64 * self.mac_units as f64;
        if slots == 0.0 {
            0.0
        } else {
            self.useful_macs as f64 / slots
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.total_cycles == self.preload_cycles + self.compute_cycles + self.drain_cycles
    }
}

impl AddAssign for CycleReport {
    fn add_assign(&mut self, o: Self) {
        self.preload_cycles += o.preload_cycles;
        self.compute_cycles += o.compute_cycles;
        self.drain_cycles += o.drain_cycles;
        self.total_cycles += o.total_cycles;
        self.issued_row_ops += o.issued_row_ops;
        self.useful_macs += o.useful_macs;
        self.mac_units = self.mac_units.max(o.mac_units);
        self.approximate_baseline |= o.approximate_baseline;
    }
}

impl Add for CycleReport {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for CycleReport {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}
