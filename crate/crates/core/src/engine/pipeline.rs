//! The datapath behind the read ports: issue, read, multiply, the adder-tree
//! levels and the accumulate/writeback stage. Each in-flight port group owns
//! one slot; slots advance one stage per cycle.

use super::memory::EngineMemory;
use super::trace::{PipelineTrace, Stage};
use crate::matrix::DenseMatrix;
use crate::sparse::Entry;

/// Up to `n` entries of one A row, presented to the ports in one cycle.
#[derive(Debug, Clone)]
pub(crate) struct PortGroup {
    pub row: usize,
    pub index: usize,
    pub of: usize,
    pub entries: Vec<Entry>,
}

#[derive(Debug)]
struct Slot {
    busy: bool,
    row: usize,
    index: usize,
    of: usize,
    entries: Vec<Entry>,
    /// Port-major partial vectors: `lanes[p * cols + j]`.
    lanes: Vec<i32>,
    /// Live partial vectors (halves at each reduce level).
    width: usize,
}

#[derive(Debug)]
pub(crate) struct Pipeline {
    ports: usize,
    reduce_levels: usize,
    slots: Vec<Slot>,
}

impl Pipeline {
    pub fn new(ports: usize, reduce_levels: usize, width: usize) -> Self {
        let slots = (0..reduce_levels + 4)
            .map(|_| Slot {
                busy: false,
                row: 0,
                index: 0,
                of: 0,
                entries: Vec::with_capacity(ports),
                lanes: vec![0; ports * width],
                width: 0,
            })
            .collect();
        Self {
            ports,
            reduce_levels,
            slots,
        }
    }

    pub fn is_busy(&self) -> bool {
        self.slots.iter().any(|s| s.busy)
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| s.busy = false);
    }

    fn stage_of(&self, slot: usize) -> Stage {
        match slot {
            0 => Stage::Issue,
            1 => Stage::Read,
            2 => Stage::Multiply,
            s if s < 3 + self.reduce_levels => Stage::Reduce(s - 2),
            _ => Stage::Accumulate,
        }
    }

    /// Advances one cycle: every group moves one stage forward, `incoming`
    /// enters the issue stage, then each occupied stage does its work. A group
    /// leaves the pipeline at the end of its accumulate cycle.
    pub fn step(
        &mut self,
        cycle: u64,
        incoming: Option<PortGroup>,
        mem: &EngineMemory,
        acc: &mut DenseMatrix<i32>,
        mut trace: Option<&mut PipelineTrace>,
    ) {
        self.slots.rotate_right(1);
        let head = &mut self.slots[0];
        debug_assert!(!head.busy);
        if let Some(g) = incoming {
            debug_assert!(g.entries.len() <= self.ports);
            head.busy = true;
            head.row = g.row;
            head.index = g.index;
            head.of = g.of;
            head.entries.clear();
            head.entries.extend_from_slice(&g.entries);
        }

        let cols = acc.cols();
        for s in 0..self.slots.len() {
            if !self.slots[s].busy {
                continue;
            }
            let stage = self.stage_of(s);
            let slot = &mut self.slots[s];
            let detail = match stage {
                Stage::Issue => format!(
                    "row={},group={}/{},entries={}",
                    slot.row,
                    slot.index + 1,
                    slot.of,
                    slot.entries.len()
                ),
                Stage::Read => {
                    for p in 0..self.ports {
                        let lane = &mut slot.lanes[p * cols..(p + 1) * cols];
                        match slot.entries.get(p) {
                            Some(e) => {
                                let row = &mem.read_row(e.col)[..cols];
                                lane.iter_mut().zip(row).for_each(|(l, &v)| *l = v as i32);
                            }
                            None => lane.fill(0),
                        }
                    }
                    slot.width = self.ports;
                    format!("row={},ports={}", slot.row, slot.entries.len())
                }
                Stage::Multiply => {
                    for (p, e) in slot.entries.iter().enumerate() {
                        let v = e.value as i32;
                        // 16x16 products always fit in 32 bits.
                        slot.lanes[p * cols..(p + 1) * cols]
                            .iter_mut()
                            .for_each(|l| *l *= v);
                    }
                    format!(
                        "row={},products={}",
                        slot.row,
                        slot.entries.len() * cols
                    )
                }
                Stage::Reduce(level) => {
                    let w = slot.width;
                    let half = w.div_ceil(2);
                    for i in 0..half {
                        let (l, r) = (2 * i, 2 * i + 1);
                        for j in 0..cols {
                            let mut v = slot.lanes[l * cols + j];
                            if r < w {
                                v = v.wrapping_add(slot.lanes[r * cols + j]);
                            }
                            slot.lanes[i * cols + j] = v;
                        }
                    }
                    slot.width = half;
                    format!("row={},level={},width={}", slot.row, level, half)
                }
                Stage::Accumulate => {
                    debug_assert_eq!(slot.width, 1);
                    acc.row_mut(slot.row)
                        .iter_mut()
                        .zip(&slot.lanes[..cols])
                        .for_each(|(a, &v)| *a = a.wrapping_add(v));
                    // Writeback completes this cycle; the slot is free for the next.
                    slot.busy = false;
                    format!("row={}", slot.row)
                }
                Stage::Preload => unreachable!("preload is not a pipeline stage"),
            };
            if let Some(t) = trace.as_deref_mut() {
                t.push(cycle, stage, detail);
            }
        }
    }
}
