use std::fmt;
use std::io::{self, Write};

/// Pipeline stage names as they appear in trace dumps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Preload,
    Issue,
    Read,
    Multiply,
    /// Adder-tree level, 1-based.
    Reduce(usize),
    Accumulate,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Preload => f.write_str("preload"),
            Stage::Issue => f.write_str("issue"),
            Stage::Read => f.write_str("read"),
            Stage::Multiply => f.write_str("multiply"),
            Stage::Reduce(l) => write!(f, "reduce{l}"),
            Stage::Accumulate => f.write_str("accumulate"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub stage: Stage,
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cycle={} stage={} detail={}", self.cycle, self.stage, self.detail)
    }
}

/// Per-cycle stage occupancy log.
///
/// Dump format, one line per occupied stage per cycle, in cycle order and
/// pipeline order within a cycle:
///
/// ```text
/// cycle=<t> stage=<name> detail=<key=value,...>
/// ```
///
/// Stage names are `preload`, `issue`, `read`, `multiply`, `reduce<l>`
/// and `accumulate`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PipelineTrace {
    pub events: Vec<TraceEvent>,
}

impl PipelineTrace {
    pub(crate) fn push(&mut self, cycle: u64, stage: Stage, detail: String) {
        self.events.push(TraceEvent { cycle, stage, detail });
    }

    /// Distinct cycles in which `stage` was occupied.
    pub fn cycles_with(&self, stage: Stage) -> usize {
        let mut cycles: Vec<u64> = self
            .events
            .iter()
            .filter(|e| e.stage == stage)
            .map(|e| e.cycle)
            .collect();
        cycles.dedup();
        cycles.len()
    }

    pub fn events_for(&self, stage: Stage) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.stage == stage)
    }

    /// First and last cycle with any activity.
    pub fn span(&self) -> Option<(u64, u64)> {
        let first = self.events.first()?.cycle;
        let last = self.events.iter().map(|e| e.cycle).max()?;
        Some((first, last))
    }

    pub fn write_to(&self, mut w: impl Write) -> io::Result<()> {
        for e in &self.events {
            writeln!(w, "{e}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        String::from_utf8(out).expect("ascii")
    }
}
