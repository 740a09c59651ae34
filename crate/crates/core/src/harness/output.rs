use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::run::RunReport;
use crate::error::{Error, Result};
use crate::solver::RunTrace;

pub const TRACE_FILE: &str = "trace.csv";
pub const SUMMARY_FILE: &str = "summary.toml";
pub const PLOT_FILE: &str = "plot.dat";

/// Writes `trace.csv`, `summary.toml` and `plot.dat` into `dir`, creating it
/// if needed.
pub fn emit_outputs(report: &RunReport, trace: &RunTrace, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join(TRACE_FILE);
    let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
    trace.write_csv(BufWriter::new(file))?;

    let path = dir.join(SUMMARY_FILE);
    let text = toml::to_string(report).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;

    let path = dir.join(PLOT_FILE);
    std::fs::write(&path, plot_data(trace)).map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Whitespace-separated columns `k gap consensus_x consensus_y`, `nan` for
/// missing values.
pub fn plot_data(trace: &RunTrace) -> String {
    let mut out = String::from("# k gap consensus_x consensus_y\n");
    let show = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"));
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            r.k,
            show(r.gap_estimate),
            show(r.consensus_x),
            show(r.consensus_y)
        );
    }
    out
}
