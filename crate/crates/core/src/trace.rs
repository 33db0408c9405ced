//! Per-slot trace output: a versioned CSV with one wide row per slot.
//!
//! The first line is a `#` comment carrying the schema version, so readers
//! can refuse files written by an incompatible build. Floats are written
//! in shortest round-trip form: parsing a field back yields bit-identical
//! values, which lets summaries be recomputed from a trace exactly and
//! makes reruns byte-comparable.

use crate::dpra::SlotMetrics;
use crate::queues::AuxQueues;
use std::io::{self, BufRead, Write};

/// Bump when the column set or field formatting changes.
pub const SCHEMA_VERSION: u32 = 1;

/// Column names for a system with `j` APs, in row order.
pub fn trace_columns(j: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "t",
        "latency",
        "chain_max",
        "tau_bloc",
        "objective",
        "bcd_rounds",
        "feas_worst",
        "c4_violations",
        "c5_violations",
        "bnb_unproven",
        "e_inf_gateway",
        "e_inf_ap",
        "e_bloc",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for name in ["o", "u", "q", "s", "e_ap", "e_blk"] {
        for idx in 0..j {
            cols.push(format!("{name}_{idx}"));
        }
    }
    cols
}

/// Shortest decimal form that parses back to the same bits. Plain
/// notation for moderate magnitudes, scientific outside them so a field
/// never spans hundreds of zeros.
pub fn fmt_field(x: f64) -> String {
    if x == 0.0 || (x.is_finite() && x.abs() >= 1e-4 && x.abs() < 1e15) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

/// Streaming CSV writer for one run's slot metrics.
pub struct TraceWriter<W: Write> {
    w: W,
    j: usize,
}

impl<W: Write> TraceWriter<W> {
    /// Writes the version comment and the header row.
    pub fn new(mut w: W, j: usize) -> io::Result<Self> {
        writeln!(w, "# bdtsim-trace v{SCHEMA_VERSION}")?;
        writeln!(w, "{}", trace_columns(j).join(","))?;
        Ok(TraceWriter { w, j })
    }

    /// Appends one slot. `queues` must be the backlog the controller saw
    /// when it made this slot's decision (pre-update).
    pub fn record(&mut self, m: &SlotMetrics, queues: &AuxQueues) -> io::Result<()> {
        debug_assert_eq!(m.o.len(), self.j);
        debug_assert_eq!(queues.len(), self.j);
        let mut row = String::with_capacity(256);
        row.push_str(&m.t.to_string());
        for v in [m.latency, m.chain_max, m.tau_bloc, m.objective] {
            row.push(',');
            row.push_str(&fmt_field(v));
        }
        row.push(',');
        row.push_str(&m.rounds_obj.len().to_string());
        row.push(',');
        row.push_str(&fmt_field(m.feas_worst));
        for v in [m.stats.c4_violations, m.stats.c5_violations, m.stats.bnb_unproven] {
            row.push(',');
            row.push_str(&v.to_string());
        }
        for v in [m.e_inf_gateway, m.e_inf_ap, m.e_bloc] {
            row.push(',');
            row.push_str(&fmt_field(v));
        }
        for series in [&m.o, &m.u, &queues.q, &queues.s, &m.e_inf_ap_per, &m.e_bloc_per] {
            for &v in series.iter() {
                row.push(',');
                row.push_str(&fmt_field(v));
            }
        }
        writeln!(self.w, "{row}")
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.w.flush()
    }

    pub fn into_inner(self) -> W {
        self.w
    }
}

/// A trace read back into memory: column names plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceData {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl TraceData {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// All values of one column, in slot order.
    pub fn series(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.column(name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Parses a trace written by [`TraceWriter`], checking the version line.
pub fn read_trace<R: BufRead>(r: R) -> io::Result<TraceData> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = r.lines();
    let version = lines
        .next()
        .ok_or_else(|| bad("empty trace".into()))??;
    let expect = format!("# bdtsim-trace v{SCHEMA_VERSION}");
    if version != expect {
        return Err(bad(format!("version line {version:?}, expected {expect:?}")));
    }
    let header = lines
        .next()
        .ok_or_else(|| bad("trace has no header row".into()))??;
    let columns: Vec<String> = header.split(',').map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| bad(format!("row {}: field {f:?}: {e}", lineno + 3)))
            })
            .collect::<io::Result<_>>()?;
        if row.len() != columns.len() {
            return Err(bad(format!(
                "row {}: {} fields, header has {}",
                lineno + 3,
                row.len(),
                columns.len()
            )));
        }
        rows.push(row);
    }
    Ok(TraceData { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::SolveStats;

    fn metrics(t: u64, j: usize) -> SlotMetrics {
        SlotMetrics {
            t,
            chain_max: 0.25 + t as f64,
            tau_bloc: 1e-7 * (t + 1) as f64,
            latency: 0.25 + t as f64 + 1e-7 * (t + 1) as f64,
            o: (0..j).map(|i| 1e9 * (i + 1) as f64).collect(),
            u: (0..j).map(|i| 40.0 + i as f64 / 3.0).collect(),
            e_inf_gateway: 0.125,
            e_inf_ap: 3.5e-3,
            e_bloc: 1e-8,
            e_inf_ap_per: (0..j).map(|i| 1e-3 * (i + 1) as f64).collect(),
            e_bloc_per: (0..j).map(|i| 1e-9 * (i + 2) as f64).collect(),
            objective: -17.03125 * (t as f64 + 1.0),
            rounds_obj: vec![1.0, 0.5],
            feas_worst: -1e-9,
            stats: SolveStats::default(),
        }
    }

    fn queues(j: usize) -> AuxQueues {
        AuxQueues {
            q: (0..j).map(|i| 50.0 + 0.1 * i as f64).collect(),
            s: (0..j).map(|i| 49.0 - 0.1 * i as f64).collect(),
        }
    }

    #[test]
    fn round_trips_through_parser() {
        let j = 3;
        let mut w = TraceWriter::new(Vec::new(), j).unwrap();
        for t in 0..5 {
            w.record(&metrics(t, j), &queues(j)).unwrap();
        }
        let bytes = w.into_inner();
        let data = read_trace(bytes.as_slice()).unwrap();
        assert_eq!(data.columns, trace_columns(j));
        assert_eq!(data.rows.len(), 5);
        let lat = data.series("latency").unwrap();
        for (t, &v) in lat.iter().enumerate() {
            assert_eq!(v, metrics(t as u64, j).latency, "bit-exact round trip");
        }
        assert_eq!(data.series("q_2").unwrap(), vec![50.2; 5]);
    }

    #[test]
    fn field_formatting_round_trips_bit_exactly() {
        for &x in &[
            0.0,
            -0.0,
            1.0,
            0.1,
            1.0 / 3.0,
            -17.03125,
            1e-300,
            -2.5e-17,
            6.02214076e23,
            f64::MAX,
            f64::MIN_POSITIVE,
            f64::INFINITY,
            f64::NEG_INFINITY,
        ] {
            let s = fmt_field(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "field {s}");
            assert!(s.len() < 32, "field stays compact: {s}");
        }
        let nan = fmt_field(f64::NAN);
        assert!(nan.parse::<f64>().unwrap().is_nan());
    }

    #[test]
    fn identical_runs_give_identical_bytes() {
        let write = || {
            let mut w = TraceWriter::new(Vec::new(), 2).unwrap();
            for t in 0..3 {
                w.record(&metrics(t, 2), &queues(2)).unwrap();
            }
            w.into_inner()
        };
        assert_eq!(write(), write());
    }

    #[test]
    fn version_mismatch_is_refused() {
        let text = "# bdtsim-trace v999\nt,latency\n0,1.0\n";
        let err = read_trace(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn ragged_row_is_refused() {
        let text = format!("# bdtsim-trace v{SCHEMA_VERSION}\nt,latency\n0,1.0,9.0\n");
        assert!(read_trace(text.as_bytes()).is_err());
    }
}
