use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

/// Column order of the trace CSV.
pub const TRACE_COLUMNS: [&str; 8] = [
    "k",
    "inner_steps",
    "grad_G_calls",
    "H_calls",
    "gap_estimate",
    "consensus_x",
    "consensus_y",
    "wall_ms",
];

/// Telemetry for one outer iteration. Call counters are cumulative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub k: usize,
    pub inner_steps: usize,
    pub grad_g_calls: u64,
    pub h_calls: u64,
    pub gap_estimate: Option<f64>,
    pub consensus_x: Option<f64>,
    pub consensus_y: Option<f64>,
    pub wall_ms: f64,
}

/// The three outer-loop points of iteration `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub z_bar: Point,
    pub z: Point,
    pub z_under: Point,
}

/// What a solver run did: per-iteration records plus totals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    /// Filled only when iterate retention is requested.
    pub snapshots: Vec<Snapshot>,
    pub grad_g_calls: u64,
    pub h_calls: u64,
    pub inner_steps: u64,
    /// Rounds actually spent: one per cached `∇G` evaluation when `G`
    /// needs communication.
    pub communication_rounds: u64,
    /// Rounds a variant re-evaluating `∇G` in every inner step would spend.
    pub uncached_rounds: u64,
}

impl RunTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::Parse(format!("csv: {e}"));
        w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.k.to_string(),
                r.inner_steps.to_string(),
                r.grad_g_calls.to_string(),
                r.h_calls.to_string(),
                opt(r.gap_estimate),
                opt(r.consensus_x),
                opt(r.consensus_y),
                r.wall_ms.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::Parse(format!("csv flush: {e}")))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        RunTrace::new().write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "k,inner_steps,grad_G_calls,H_calls,gap_estimate,consensus_x,consensus_y,wall_ms\n"
        );
    }

    #[test]
    fn missing_diagnostics_are_empty_fields() {
        let mut t = RunTrace::new();
        t.records.push(IterationRecord {
            k: 1,
            inner_steps: 3,
            grad_g_calls: 1,
            h_calls: 6,
            gap_estimate: Some(0.25),
            consensus_x: None,
            consensus_y: None,
            wall_ms: 0.0,
        });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().nth(1), Some("1,3,1,6,0.25,,,0"));
    }
}
