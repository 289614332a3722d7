use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use super::ServerPhase;
use crate::policy::Queue;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceKind {
    Arrival(Queue),
    /// Arrival lost to a full buffer.
    Drop(Queue),
    Departure(Queue),
    /// The server entered the phase recorded with the event.
    Phase,
}

impl TraceKind {
    pub fn label(&self) -> String {
        match self {
            TraceKind::Arrival(q) => format!("arrival{}", q.number()),
            TraceKind::Drop(q) => format!("drop{}", q.number()),
            TraceKind::Departure(q) => format!("departure{}", q.number()),
            TraceKind::Phase => "phase".to_string(),
        }
    }
}

/// State right after an event was applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: f64,
    pub kind: TraceKind,
    pub n: [u64; 2],
    pub phase: ServerPhase,
}

/// CSV with columns `t,event_kind,n1,n2,phase`.
pub fn write_trace_csv<W: Write>(mut w: W, events: &[TraceEvent]) -> io::Result<()> {
    writeln!(w, "t,event_kind,n1,n2,phase")?;
    for e in events {
        writeln!(w, "{},{},{},{},{}", e.t, e.kind.label(), e.n[0], e.n[1], e.phase)?;
    }
    Ok(())
}
