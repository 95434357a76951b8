//! Aligning traces on effective passes and summarizing milestones.

use std::collections::BTreeMap;
use std::path::Path;

use super::io::{read_manifest, read_refmin, read_trace, write_atomic};
use crate::diagnostics::lower_median;
use crate::error::{Error, Result};
use crate::trace::{attach_gaps, TraceRecord};

pub const TOLERANCES: [f64; 3] = [1e-2, 1e-4, 1e-6];
pub const COMPARISON_CSV: &str = "comparison.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// A trace tagged with its solver and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTrace {
    pub solver: String,
    pub seed: u64,
    pub trace: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Milestone {
    pub solver: String,
    pub tolerance: f64,
    /// Lower median over seeds of the passes needed; `None` if that median never got there.
    pub passes: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// `solver/seed` per column.
    pub columns: Vec<String>,
    /// Effective passes and, per column, the gap of the latest record at or before them.
    pub rows: Vec<(f64, Vec<Option<f64>>)>,
    pub summary: Vec<Milestone>,
}

/// Effective passes of the first record whose gap is at most `tol`.
pub fn passes_to_reach(trace: &[TraceRecord], tol: f64) -> Option<f64> {
    trace.iter().find(|r| r.gap.is_some_and(|g| g <= tol)).map(|r| r.effective_passes)
}

pub fn compare(traces: &[LabeledTrace], refmin: f64) -> Comparison {
    let mut traces: Vec<LabeledTrace> = traces.to_vec();
    for t in &mut traces {
        attach_gaps(&mut t.trace, refmin);
    }
    let columns = traces.iter().map(|t| format!("{}/{}", t.solver, t.seed)).collect();

    let mut grid: Vec<f64> = traces.iter().flat_map(|t| t.trace.iter().map(|r| r.effective_passes)).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let rows = grid
        .into_iter()
        .map(|p| {
            let vals = traces
                .iter()
                .map(|t| t.trace.iter().take_while(|r| r.effective_passes <= p).last().and_then(|r| r.gap))
                .collect();
            (p, vals)
        })
        .collect();

    let mut by_solver: BTreeMap<&str, Vec<&LabeledTrace>> = BTreeMap::new();
    let mut order = Vec::new();
    for t in &traces {
        if !by_solver.contains_key(t.solver.as_str()) {
            order.push(t.solver.as_str());
        }
        by_solver.entry(t.solver.as_str()).or_default().push(t);
    }
    let mut summary = Vec::new();
    for solver in order {
        for &tol in &TOLERANCES {
            let reached: Vec<f64> = by_solver[solver]
                .iter()
                .map(|t| passes_to_reach(&t.trace, tol).unwrap_or(f64::INFINITY))
                .collect();
            let m = lower_median(&reached);
            summary.push(Milestone {
                solver: solver.to_string(),
                tolerance: tol,
                passes: m.is_finite().then_some(m),
            });
        }
    }
    Comparison { columns, rows, summary }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn comparison_csv(c: &Comparison) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["effective_passes".to_string()];
    header.extend(c.columns.iter().cloned());
    w.write_record(&header)?;
    for (p, vals) in &c.rows {
        let mut rec = vec![format!("{p:?}")];
        rec.extend(vals.iter().map(|v| fmt_opt(*v)));
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn summary_csv(c: &Comparison) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solver", "tolerance", "passes"])?;
    for m in &c.summary {
        let passes = m.passes.map(|p| format!("{p:?}")).unwrap_or_else(|| "unreached".into());
        w.write_record([m.solver.clone(), format!("{:e}", m.tolerance), passes])?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

/// Loads every trace listed in `dir`'s manifest, checking they share one objective.
pub fn load_traces(dir: &Path) -> Result<Vec<LabeledTrace>> {
    let entries = read_manifest(dir)?;
    let Some(first) = entries.first() else {
        return Err(Error::InvalidData(format!(
            "{} lists no traces",
            dir.join(super::io::MANIFEST).display()
        )));
    };
    if let Some(other) = entries.iter().find(|e| e.objective_key != first.objective_key) {
        return Err(Error::Comparability(format!(
            "{} and {} were produced for different objectives",
            first.file, other.file
        )));
    }
    entries
        .iter()
        .map(|e| {
            Ok(LabeledTrace {
                solver: e.solver.clone(),
                seed: e.seed,
                trace: read_trace(&dir.join(&e.file))?,
            })
        })
        .collect()
}

/// Writes `comparison.csv` and `summary.csv` into `dir`. The reference minimum
/// comes from `refmin` or, failing that, from the directory's sidecar file.
pub fn cmd_compare(dir: &Path, refmin: Option<f64>) -> Result<Comparison> {
    let traces = load_traces(dir)?;
    let reference = match refmin {
        Some(v) => v,
        None => read_refmin(dir)?.value,
    };
    let c = compare(&traces, reference);
    write_atomic(&dir.join(COMPARISON_CSV), &comparison_csv(&c)?)?;
    write_atomic(&dir.join(SUMMARY_CSV), &summary_csv(&c)?)?;
    Ok(c)
}
