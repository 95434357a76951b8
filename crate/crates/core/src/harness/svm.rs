//! Linear SVM training with per-epoch train and test accuracy.

use std::path::PathBuf;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::write_atomic;
use super::spec::ExperimentSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::objective::Loss;
use crate::solver::{run_observed, Event, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmRecord {
    pub epoch: usize,
    pub effective_passes: f64,
    pub wall_time_s: f64,
    pub objective: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// One trained model per class (a single one for binary problems).
#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    /// Class label per weight vector; `[1.0]` for a binary model.
    pub classes: Vec<f64>,
    pub weights: Vec<Vec<f64>>,
    /// Prediction for a zero score in the binary case.
    pub tie_label: f64,
}

impl LinearClassifier {
    pub fn predict(&self, data: &Dataset, i: usize) -> f64 {
        let ex = data.example(i);
        if self.weights.len() == 1 {
            let s = ex.dot(&self.weights[0]);
            return if s > 0.0 {
                1.0
            } else if s < 0.0 {
                -1.0
            } else {
                self.tie_label
            };
        }
        let mut best = (f64::NEG_INFINITY, self.classes[0]);
        for (w, &c) in self.weights.iter().zip(&self.classes) {
            let s = ex.dot(w);
            if s > best.0 {
                best = (s, c);
            }
        }
        best.1
    }

    pub fn accuracy(&self, data: &Dataset) -> f64 {
        if data.n() == 0 {
            return f64::NAN;
        }
        let hits = (0..data.n()).filter(|&i| self.predict(data, i) == data.example(i).label()).count();
        hits as f64 / data.n() as f64
    }
}

/// The more frequent of +1 and -1, preferring +1 on a tie.
pub fn majority_label(data: &Dataset) -> f64 {
    let pos = data.labels().filter(|&b| b > 0.0).count();
    if 2 * pos >= data.n() {
        1.0
    } else {
        -1.0
    }
}

/// Binary problems as they are, multi-class ones expanded one-vs-rest.
pub fn binary_tasks(train: &Dataset, one_vs_rest: bool) -> Result<Vec<(f64, Dataset)>> {
    if train.is_binary() && !one_vs_rest {
        return Ok(vec![(1.0, train.clone())]);
    }
    if !one_vs_rest {
        return Err(Error::Label(format!(
            "labels {:?} are not +1/-1; set svm.one_vs_rest = true",
            train.classes()
        )));
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::Label("one-vs-rest needs at least two classes".into()));
    }
    Ok(classes.into_iter().map(|c| (c, train.one_vs_rest(c))).collect())
}

/// Trains with `configure(objective)` on every binary task and evaluates each epoch.
pub fn train_and_evaluate(
    spec: &ExperimentSpec,
    train: &Dataset,
    test: &Dataset,
    one_vs_rest: bool,
    configure: &dyn Fn(&crate::objective::Objective) -> Result<SolverConfig>,
) -> Result<Vec<SvmRecord>> {
    let tasks = binary_tasks(train, one_vs_rest)?;
    let tie_label = if tasks.len() == 1 { majority_label(&tasks[0].1) } else { 1.0 };
    let mut per_task = Vec::with_capacity(tasks.len());
    for (_, data) in &tasks {
        let obj = spec.build_objective(Arc::new(data.clone()))?;
        let cfg = configure(&obj)?;
        let mut snaps = vec![cfg.x0.clone().unwrap_or_else(|| vec![0.0; obj.dim()])];
        let mut observe = |e: Event<'_>| {
            if let Event::EpochEnd { snapshot, .. } = e {
                snaps.push(snapshot.to_vec());
            }
        };
        let res = run_observed(&obj, &cfg, &mut observe)?;
        per_task.push((res.trace, snaps));
    }
    let epochs = per_task[0].0.len();
    let k = per_task.len() as f64;
    let classes: Vec<f64> = tasks.iter().map(|t| t.0).collect();
    Ok((0..epochs)
        .map(|s| {
            let model = LinearClassifier {
                classes: classes.clone(),
                weights: per_task.iter().map(|t| t.1[s].clone()).collect(),
                tie_label,
            };
            SvmRecord {
                epoch: s,
                effective_passes: per_task.iter().map(|t| t.0[s].effective_passes).sum(),
                wall_time_s: per_task.iter().map(|t| t.0[s].wall_time_s).sum(),
                objective: per_task.iter().map(|t| t.0[s].objective).sum::<f64>() / k,
                train_accuracy: model.accuracy(train),
                test_accuracy: model.accuracy(test),
            }
        })
        .collect())
}

pub fn svm_csv(records: &[SvmRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::io("<memory>", e.into_error()))
}

/// Splits the dataset, trains every solver for every seed, and writes one
/// `svm_<solver>_seed<k>.csv` per run. Returns the written paths in spec order.
pub fn cmd_svm(spec: &ExperimentSpec) -> Result<Vec<PathBuf>> {
    if spec.objective.loss != Loss::Hinge {
        return Err(Error::Spec {
            field: "objective.loss".into(),
            message: "svm runs use the hinge loss".into(),
        });
    }
    let svm = spec.svm.clone().unwrap_or(super::spec::SvmSpec {
        train_fraction: 0.1,
        split_seed: 0,
        one_vs_rest: false,
    });
    let data = spec.build_dataset()?;
    let (train, test) = data.split(svm.train_fraction, svm.split_seed)?;
    binary_tasks(&train, svm.one_vs_rest)?;
    std::fs::create_dir_all(&spec.output).map_err(|e| Error::io(&spec.output, e))?;

    let jobs: Vec<(usize, u64)> =
        (0..spec.solvers.len()).flat_map(|k| spec.seeds.iter().map(move |&s| (k, s))).collect();
    jobs.par_iter()
        .map(|&(k, seed)| {
            let records = train_and_evaluate(spec, &train, &test, svm.one_vs_rest, &|obj| {
                spec.solver_config(k, obj, seed)
            })?;
            let path = spec.output.join(format!("svm_{}_seed{seed}.csv", spec.solver_name(k)));
            write_atomic(&path, &svm_csv(&records)?)?;
            Ok(path)
        })
        .collect()
}
