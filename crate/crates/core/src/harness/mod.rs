//! Experiment plumbing behind the `fsvrg` command-line tool.

pub mod compare;
pub mod io;
pub mod refmin;
pub mod spec;
pub mod svm;

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::solver::run;
use io::{update_manifest, write_refmin, write_trace, ManifestEntry, RefminRecord};
use spec::ExperimentSpec;

pub use compare::cmd_compare;
pub use svm::cmd_svm;

/// File name of the trace for one solver and seed.
pub fn trace_file_name(solver: &str, seed: u64) -> String {
    format!("{solver}_seed{seed}.csv")
}

/// Runs every solver for every seed and writes one trace CSV per pair plus the manifest.
pub fn cmd_run(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    let obj = Arc::new(spec.build_objective(spec.build_dataset()?)?);
    let jobs: Vec<(usize, u64)> =
        (0..spec.solvers.len()).flat_map(|k| spec.seeds.iter().map(move |&s| (k, s))).collect();
    let configs =
        jobs.iter().map(|&(k, seed)| spec.solver_config(k, &obj, seed)).collect::<Result<Vec<_>>>()?;
    std::fs::create_dir_all(&spec.output).map_err(|e| Error::io(&spec.output, e))?;
    let key = spec.objective_key();
    let entries = jobs
        .par_iter()
        .zip(configs.par_iter())
        .map(|(&(k, seed), cfg)| {
            let solver = spec.solver_name(k);
            let res = run(&obj, cfg).map_err(|e| in_run(&solver, seed, e))?;
            let file = trace_file_name(&solver, seed);
            write_trace(&spec.output.join(&file), &res.trace)?;
            Ok(ManifestEntry { file, solver, seed, objective_key: key.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    update_manifest(&spec.output, &entries)?;
    Ok(entries.iter().map(|e| spec.output.join(&e.file)).collect())
}

fn in_run(solver: &str, seed: u64, e: Error) -> Error {
    Error::Run { solver: solver.to_string(), seed, source: Box::new(e) }
}

/// Computes the reference minimum and writes it to `refmin.txt` in the output directory.
pub fn cmd_refmin(spec: &ExperimentSpec) -> Result<RefminRecord> {
    let obj: Objective = spec.build_objective(spec.build_dataset()?)?;
    let settings = spec.refmin.clone().unwrap_or_default();
    let (_, rec) = refmin::reference_minimum(&obj, &settings)?;
    std::fs::create_dir_all(&spec.output).map_err(|e| Error::io(&spec.output, e))?;
    write_refmin(&spec.output, &rec)?;
    Ok(rec)
}
