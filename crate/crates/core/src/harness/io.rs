//! Trace CSVs, the run manifest and the reference-minimum sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::TraceRecord;

pub const MANIFEST: &str = "manifest.txt";
pub const REFMIN: &str = "refmin.txt";
pub const TRACE_HEADER: [&str; 4] = ["epoch", "effective_passes", "wall_time_s", "objective"];

#[derive(Serialize, Deserialize)]
struct Row {
    epoch: usize,
    effective_passes: f64,
    wall_time_s: f64,
    objective: f64,
}

/// Writes `contents` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(contents).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn trace_to_csv(trace: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in trace {
        w.serialize(Row {
            epoch: r.epoch,
            effective_passes: r.effective_passes,
            wall_time_s: r.wall_time_s,
            objective: r.objective,
        })?;
    }
    if trace.is_empty() {
        w.write_record(TRACE_HEADER)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

pub fn trace_from_csv(bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != TRACE_HEADER {
        return Err(Error::InvalidData(format!(
            "unexpected trace header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    r.deserialize::<Row>()
        .map(|row| {
            let row = row?;
            Ok(TraceRecord {
                epoch: row.epoch,
                effective_passes: row.effective_passes,
                wall_time_s: row.wall_time_s,
                objective: row.objective,
                gap: None,
            })
        })
        .collect()
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &trace_to_csv(trace)?)
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    trace_from_csv(&bytes)
}

/// One trace listed in a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub solver: String,
    pub seed: u64,
    pub objective_key: String,
}

/// Tab-separated `file, solver, seed, objective key`, sorted by file name.
pub fn manifest_to_string(entries: &[ManifestEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", e.file, e.solver, e.seed, e.objective_key));
    }
    out
}

pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let parts: Vec<&str> = line.splitn(4, '\t').collect();
            let bad = |m: &str| Error::Parse { line: i + 1, message: format!("manifest: {m}") };
            if parts.len() != 4 {
                return Err(bad("expected 4 tab-separated fields"));
            }
            Ok(ManifestEntry {
                file: parts[0].into(),
                solver: parts[1].into(),
                seed: parts[2].parse().map_err(|_| bad("seed is not an integer"))?,
                objective_key: parts[3].into(),
            })
        })
        .collect()
}

pub fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    parse_manifest(&text)
}

/// Merges `entries` into the directory's manifest, replacing entries for the same file.
pub fn update_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut all: BTreeMap<String, ManifestEntry> = BTreeMap::new();
    if dir.join(MANIFEST).exists() {
        for e in read_manifest(dir)? {
            all.insert(e.file.clone(), e);
        }
    }
    for e in entries {
        all.insert(e.file.clone(), e.clone());
    }
    let list: Vec<ManifestEntry> = all.into_values().collect();
    write_atomic(&dir.join(MANIFEST), manifest_to_string(&list).as_bytes())
}

/// How a reference minimum was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefminMethod {
    ClosedForm,
    LongRun,
}

impl RefminMethod {
    pub fn tag(self) -> &'static str {
        match self {
            RefminMethod::ClosedForm => "closed_form",
            RefminMethod::LongRun => "long_run",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefminRecord {
    pub value: f64,
    pub method: RefminMethod,
}

pub fn write_refmin(dir: &Path, rec: &RefminRecord) -> Result<PathBuf> {
    let path = dir.join(REFMIN);
    let text = format!("value = {:?}\nmethod = {}\n", rec.value, rec.method.tag());
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

pub fn read_refmin(dir: &Path) -> Result<RefminRecord> {
    let path = dir.join(REFMIN);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut value = None;
    let mut method = None;
    for (i, line) in text.lines().enumerate() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let bad = |m: String| Error::Parse { line: i + 1, message: m };
        match k.trim() {
            "value" => value = Some(v.trim().parse::<f64>().map_err(|e| bad(format!("value: {e}")))?),
            "method" => {
                method = Some(match v.trim() {
                    "closed_form" => RefminMethod::ClosedForm,
                    "long_run" => RefminMethod::LongRun,
                    other => return Err(bad(format!("unknown method {other:?}"))),
                })
            }
            _ => {}
        }
    }
    match (value, method) {
        (Some(value), Some(method)) => Ok(RefminRecord { value, method }),
        _ => Err(Error::InvalidData(format!("{} lacks value or method", path.display()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TraceRecord> {
        vec![
            TraceRecord {
                epoch: 0,
                effective_passes: 0.0,
                wall_time_s: 0.0,
                objective: std::f64::consts::LN_2,
                gap: None,
            },
            TraceRecord {
                epoch: 1,
                effective_passes: 1.5,
                wall_time_s: 1e-4,
                objective: 1.234e-17,
                gap: None,
            },
            TraceRecord {
                epoch: 2,
                effective_passes: 3.000_000_000_000_000_4,
                wall_time_s: 2.5,
                objective: 1e300,
                gap: None,
            },
        ]
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let t = sample();
        let bytes = trace_to_csv(&t).unwrap();
        assert!(bytes.starts_with(b"epoch,effective_passes,wall_time_s,objective\n"));
        assert_eq!(trace_from_csv(&bytes).unwrap(), t);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(trace_from_csv(b"a,b\n1,2\n").is_err());
    }

    #[test]
    fn manifest_and_refmin_files() {
        let dir = tempfile::tempdir().unwrap();
        let e = |f: &str, key: &str| ManifestEntry {
            file: f.into(),
            solver: "s".into(),
            seed: 3,
            objective_key: key.into(),
        };
        update_manifest(dir.path(), &[e("b.csv", "k1"), e("a.csv", "k1")]).unwrap();
        update_manifest(dir.path(), &[e("b.csv", "k2")]).unwrap();
        let m = read_manifest(dir.path()).unwrap();
        assert_eq!(m, vec![e("a.csv", "k1"), e("b.csv", "k2")]);

        let rec = RefminRecord { value: 0.123_456_789_012_345_67, method: RefminMethod::LongRun };
        write_refmin(dir.path(), &rec).unwrap();
        assert_eq!(read_refmin(dir.path()).unwrap(), rec);
    }
}
