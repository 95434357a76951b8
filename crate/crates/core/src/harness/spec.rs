//! Experiment specifications, stored as TOML.
//!
//! ```toml
//! output = "out"
//! seeds = [0, 1, 2]
//! epochs = 20
//!
//! [dataset]
//! path = "train.libsvm"      # or: synthetic = { kind = "linear", n = 500, d = 20 }
//! normalize = true
//!
//! [objective]
//! loss = "logistic"
//! regularizer = "l2"
//! lambda1 = 1e-4
//!
//! [[solver]]
//! algorithm = "fsvrg"
//! step_scale = 3.0           # eta = 1 / (3 L)
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{synth_linear, synth_separable, Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::objective::{Loss, Objective, Regularizer};
use crate::schedule::{rho_b, theta_nsc_init, EpochSchedule, ThetaSchedule};
use crate::solver::{Algorithm, Averaging, Projection, Restart, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Output directory; relative paths resolve against the spec file.
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub epochs: usize,
    pub dataset: DatasetSpec,
    pub objective: ObjectiveSpec,
    #[serde(rename = "solver")]
    pub solvers: Vec<SolverSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svm: Option<SvmSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refmin: Option<RefminSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default)]
    pub normalize: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<usize>,
    #[serde(default)]
    pub subsample_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticSpec {
    Linear {
        n: usize,
        d: usize,
        #[serde(default = "default_task")]
        task: TaskKind,
        #[serde(default)]
        noise: f64,
        #[serde(default)]
        seed: u64,
    },
    Separable {
        n: usize,
        d: usize,
        margin: f64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_task() -> TaskKind {
    TaskKind::Regression
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    None,
    L1,
    L2,
    ElasticNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub loss: Loss,
    pub regularizer: RegularizerKind,
    #[serde(default)]
    pub lambda1: f64,
    #[serde(default)]
    pub lambda2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

/// Momentum setting written in a spec: a number or a named schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ThetaSetting {
    Constant(f64),
    Named(ThetaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaName {
    ScOptimal,
    Nsc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AveragingKind {
    Uniform,
    /// `w_k = k`
    Linear,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Label used in file names; defaults to the algorithm name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub algorithm: Option<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// `eta = 1 / (step_scale * L)`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<ThetaSetting>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub restart: Option<Restart>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaging: Option<AveragingKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub katyusha_theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub katyusha_theta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reuse_snapshot_grads: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmSpec {
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default)]
    pub one_vs_rest: bool,
}

fn default_train_fraction() -> f64 {
    0.1
}

/// Controls for the long-run reference minimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefminSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default = "default_refmin_tol")]
    pub tolerance: f64,
    #[serde(default = "default_refmin_budget")]
    pub max_epochs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_refmin_tol() -> f64 {
    1e-12
}

fn default_refmin_budget() -> usize {
    5000
}

impl Default for RefminSpec {
    fn default() -> Self {
        RefminSpec {
            eta: None,
            tolerance: default_refmin_tol(),
            max_epochs: default_refmin_budget(),
            seed: 0,
        }
    }
}

fn spec_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Spec { field: field.into(), message: message.into() }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| field_at(text, s.start)).unwrap_or_else(|| "<root>".into());
            spec_err(field, e.message().trim().to_string())
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment specs always serialize")
    }

    /// Reads a spec and resolves its relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        spec.resolve_paths(base);
        Ok(spec)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        if self.output.is_relative() {
            self.output = base.join(&self.output);
        }
        if let Some(p) = &self.dataset.path {
            if p.is_relative() {
                self.dataset.path = Some(base.join(p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(spec_err("seeds", "at least one seed is required"));
        }
        if self.epochs == 0 {
            return Err(spec_err("epochs", "must be at least 1"));
        }
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), Some(_)) => return Err(spec_err("dataset", "give either path or synthetic, not both")),
            (None, None) => return Err(spec_err("dataset", "needs path or synthetic")),
            _ => {}
        }
        if self.solvers.is_empty() {
            return Err(spec_err("solver", "at least one [[solver]] section is required"));
        }
        let mut names = std::collections::HashSet::new();
        for (k, s) in self.solvers.iter().enumerate() {
            let field = |f: &str| format!("solver[{k}].{f}");
            let alg = s.algorithm.ok_or_else(|| spec_err(field("algorithm"), "missing"))?;
            let name = s.name.clone().unwrap_or_else(|| alg.name().to_string());
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(spec_err(field("name"), format!("{name:?} must be non-empty [A-Za-z0-9_-]")));
            }
            if !names.insert(name.clone()) {
                return Err(spec_err(field("name"), format!("duplicate solver name {name:?}")));
            }
            if s.eta.is_some() && s.step_scale.is_some() {
                return Err(spec_err(field("eta"), "give eta or step_scale, not both"));
            }
            if let Some(e) = s.eta {
                if !(e > 0.0 && e.is_finite()) {
                    return Err(spec_err(field("eta"), format!("{e} must be positive")));
                }
            }
            if let Some(k) = s.step_scale {
                if !(k > 0.0 && k.is_finite()) {
                    return Err(spec_err(field("step_scale"), format!("{k} must be positive")));
                }
            }
            if !self.objective.loss.is_smooth() && s.eta.is_none() {
                return Err(spec_err(field("eta"), "required for the hinge loss"));
            }
        }
        if let Some(svm) = &self.svm {
            if !(svm.train_fraction > 0.0 && svm.train_fraction < 1.0) {
                return Err(spec_err("svm.train_fraction", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Loads or generates the dataset.
    pub fn build_dataset(&self) -> Result<Dataset> {
        let d = &self.dataset;
        let mut data = match (&d.path, &d.synthetic) {
            (Some(path), _) => Dataset::from_libsvm_file(path, d.dim)?,
            (None, Some(SyntheticSpec::Linear { n, d, task, noise, seed })) => {
                synth_linear(*n, *d, *noise, *seed, *task)?.0
            }
            (None, Some(SyntheticSpec::Separable { n, d, margin, seed })) => {
                synth_separable(*n, *d, *margin, *seed)?.0
            }
            (None, None) => return Err(spec_err("dataset", "needs path or synthetic")),
        };
        if let Some(k) = d.subsample {
            data = data.subsample(k, d.subsample_seed)?;
        }
        if d.normalize {
            data = data.normalize_rows()?;
        }
        Ok(data)
    }

    pub fn regularizer(&self) -> Result<Regularizer> {
        let o = &self.objective;
        let r = match o.regularizer {
            RegularizerKind::None => Ok(Regularizer::None),
            RegularizerKind::L1 => Regularizer::l1(o.lambda2),
            RegularizerKind::L2 => Regularizer::l2(o.lambda1),
            RegularizerKind::ElasticNet => Regularizer::elastic_net(o.lambda1, o.lambda2),
        };
        r.map_err(|e| spec_err("objective", e.to_string()))
    }

    pub fn build_objective(&self, data: impl Into<Arc<Dataset>>) -> Result<Objective> {
        let obj = Objective::new(data, self.objective.loss, self.regularizer()?)?;
        match self.objective.mu {
            Some(mu) => obj.with_mu(mu),
            None => Ok(obj),
        }
    }

    /// Identifies the objective; traces with different keys are not comparable.
    pub fn objective_key(&self) -> String {
        let o = &self.objective;
        let d = &self.dataset;
        let source = match (&d.path, &d.synthetic) {
            (Some(p), _) => format!("file:{}", p.display()),
            (None, Some(s)) => {
                format!("synthetic:{}", toml::to_string(s).unwrap_or_default().replace('\n', ","))
            }
            (None, None) => String::new(),
        };
        format!(
            "{source};dim={:?};normalize={};subsample={:?}@{};loss={:?};reg={:?};lambda1={:e};lambda2={:e};mu={:?}",
            d.dim, d.normalize, d.subsample, d.subsample_seed, o.loss, o.regularizer, o.lambda1, o.lambda2, o.mu
        )
    }

    pub fn solver_name(&self, k: usize) -> String {
        let s = &self.solvers[k];
        s.name.clone().unwrap_or_else(|| s.algorithm.map(|a| a.name()).unwrap_or("solver").to_string())
    }

    /// Solver configuration for solver `k` and one seed.
    pub fn solver_config(&self, k: usize, obj: &Objective, seed: u64) -> Result<SolverConfig> {
        let s = &self.solvers[k];
        let field = |f: &str| format!("solver[{k}].{f}");
        let wrap = |f: &'static str| move |e: Error| spec_err(format!("solver[{k}].{f}"), e.to_string());
        let alg = s.algorithm.ok_or_else(|| spec_err(field("algorithm"), "missing"))?;
        let eta = match (s.eta, s.step_scale) {
            (Some(e), _) => Some(e),
            (None, Some(scale)) => {
                let l = obj
                    .smoothness()
                    .ok_or_else(|| spec_err(field("step_scale"), "needs a smooth loss; give eta instead"))?;
                Some(1.0 / (scale * l))
            }
            (None, None) => None,
        };
        let mut cfg = SolverConfig::defaults(alg, obj, eta).map_err(wrap("eta"))?;
        cfg.epochs = s.epochs.unwrap_or(self.epochs);
        cfg.seed = seed;
        if s.m1.is_some() || s.rho.is_some() {
            cfg.epoch_schedule = EpochSchedule {
                m1: s.m1.unwrap_or(cfg.epoch_schedule.m1),
                rho: s.rho.unwrap_or(cfg.epoch_schedule.rho),
            };
        }
        if let Some(b) = s.batch_size {
            cfg.batch_size = b;
            let rb = rho_b(obj.n(), b).map_err(wrap("batch_size"))?;
            if alg == Algorithm::Fsvrg && cfg.restart == Restart::NonStronglyConvex && s.theta.is_none() {
                let l = obj.smoothness().unwrap_or(0.0);
                cfg.theta =
                    ThetaSchedule::nsc_recursive(theta_nsc_init(l, cfg.eta, rb).map_err(wrap("eta"))?);
            }
        }
        match &s.theta {
            None => {}
            Some(ThetaSetting::Constant(t)) => {
                cfg.theta = ThetaSchedule::constant(*t);
                cfg.restart = Restart::StronglyConvex;
            }
            Some(ThetaSetting::Named(ThetaName::ScOptimal)) => {
                if obj.mu() <= 0.0 {
                    return Err(spec_err(field("theta"), "sc_optimal needs a strongly convex objective"));
                }
                cfg.theta = ThetaSchedule::sc_optimal(obj.mu());
                cfg.restart = Restart::StronglyConvex;
            }
            Some(ThetaSetting::Named(ThetaName::Nsc)) => {
                let theta1 = match (s.theta1, obj.smoothness()) {
                    (Some(t), _) => t,
                    (None, Some(l)) => {
                        let rb = rho_b(obj.n(), cfg.batch_size).map_err(wrap("batch_size"))?;
                        theta_nsc_init(l, cfg.eta, rb).map_err(wrap("eta"))?
                    }
                    (None, None) => 1.0,
                };
                cfg.theta = ThetaSchedule::nsc_recursive(theta1);
                cfg.restart = Restart::NonStronglyConvex;
            }
        }
        if let Some(r) = s.restart {
            cfg.restart = r;
        }
        if let Some(radius) = s.projection_radius {
            cfg.projection = Projection::L2Ball { radius };
        }
        if let Some(AveragingKind::Linear) = s.averaging {
            let longest =
                crate::solver::inner_lengths(&cfg).map_err(wrap("m1"))?.into_iter().max().unwrap_or(0);
            cfg.averaging = Averaging::Weights((1..=longest).map(|k| k as f64).collect());
        }
        if s.katyusha_theta1.is_some() {
            cfg.katyusha_theta1 = s.katyusha_theta1;
        }
        if let Some(t2) = s.katyusha_theta2 {
            cfg.katyusha_theta2 = t2;
        }
        if let Some(r) = s.reuse_snapshot_grads {
            cfg.reuse_snapshot_grads = r;
        }
        crate::solver::validate(obj, &cfg).map_err(|e| match e {
            Error::WrongCase(_) | Error::Unsupported(_) => e,
            other => spec_err(field("algorithm"), other.to_string()),
        })?;
        Ok(cfg)
    }
}

/// Dotted path of the TOML key whose value starts at `offset`, best effort.
fn field_at(text: &str, offset: usize) -> String {
    let upto = &text[..offset.min(text.len())];
    let mut table = String::new();
    let mut solver_idx: Option<usize> = None;
    for line in upto.lines() {
        let t = line.trim();
        if t == "[[solver]]" {
            solver_idx = Some(solver_idx.map_or(0, |i| i + 1));
            table = format!("solver[{}]", solver_idx.unwrap());
        } else if t.starts_with('[') && t.ends_with(']') {
            table = t.trim_matches(|c| c == '[' || c == ']').to_string();
        }
    }
    let line = upto.rsplit('\n').next().unwrap_or("");
    let tail = &text[offset.min(text.len())..];
    let full_line = format!("{line}{}", tail.split('\n').next().unwrap_or(""));
    let key = full_line.split('=').next().map(str::trim).filter(|k| !k.is_empty() && !k.starts_with('['));
    match (table.is_empty(), key) {
        (true, Some(k)) => k.to_string(),
        (false, Some(k)) => format!("{table}.{k}"),
        (false, None) => table,
        (true, None) => "<root>".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
output = "out"
seeds = [1, 2]
epochs = 5

[dataset]
synthetic = { kind = "linear", n = 50, d = 4, task = "classification", noise = 0.1, seed = 3 }

[objective]
loss = "logistic"
regularizer = "l2"
lambda1 = 1e-3

[[solver]]
algorithm = "fsvrg"
step_scale = 3.0

[[solver]]
name = "svrg_small"
algorithm = "svrg"
eta = 0.05
"#;

    #[test]
    fn parses_and_round_trips() {
        let spec = ExperimentSpec::from_toml(BASIC).unwrap();
        assert_eq!(spec.solvers.len(), 2);
        assert_eq!(spec.solver_name(0), "fsvrg");
        assert_eq!(spec.solver_name(1), "svrg_small");
        let again = ExperimentSpec::from_toml(&spec.to_toml()).unwrap();
        assert_eq!(spec, again);
    }

    #[test]
    fn builds_configs() {
        let spec = ExperimentSpec::from_toml(BASIC).unwrap();
        let obj = spec.build_objective(spec.build_dataset().unwrap()).unwrap();
        let cfg = spec.solver_config(0, &obj, 9).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.epochs, 5);
        assert!((cfg.eta - 1.0 / (3.0 * obj.smoothness().unwrap())).abs() < 1e-15);
        assert_eq!(spec.solver_config(1, &obj, 0).unwrap().eta, 0.05);
    }

    #[test]
    fn reports_field_paths() {
        let bad = BASIC.replace("eta = 0.05", "eta = \"fast\"");
        match ExperimentSpec::from_toml(&bad) {
            Err(Error::Spec { field, .. }) => assert_eq!(field, "solver[1].eta"),
            other => panic!("{other:?}"),
        }
        let bad = BASIC.replace("eta = 0.05", "eta = -1.0");
        match ExperimentSpec::from_toml(&bad) {
            Err(Error::Spec { field, .. }) => assert_eq!(field, "solver[1].eta"),
            other => panic!("{other:?}"),
        }
        let bad = BASIC.replace("lambda1 = 1e-3", "lambda1 = 1e-3\nbogus = 1");
        assert!(matches!(ExperimentSpec::from_toml(&bad), Err(Error::Spec { .. })));
    }

    #[test]
    fn hinge_needs_eta() {
        let text = BASIC.replace("loss = \"logistic\"", "loss = \"hinge\"");
        match ExperimentSpec::from_toml(&text) {
            Err(Error::Spec { field, .. }) => assert_eq!(field, "solver[0].eta"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn relative_paths_resolve_against_spec_dir() {
        let text = BASIC.replace(
            "synthetic = { kind = \"linear\", n = 50, d = 4, task = \"classification\", noise = 0.1, seed = 3 }",
            "path = \"data/train.txt\"",
        );
        let mut spec = ExperimentSpec::from_toml(&text).unwrap();
        spec.resolve_paths(Path::new("/exp"));
        assert_eq!(spec.output, PathBuf::from("/exp/out"));
        assert_eq!(spec.dataset.path, Some(PathBuf::from("/exp/data/train.txt")));
    }

    #[test]
    fn objective_key_tracks_objective_only() {
        let a = ExperimentSpec::from_toml(BASIC).unwrap();
        let mut b = a.clone();
        b.seeds = vec![7];
        b.solvers.truncate(1);
        assert_eq!(a.objective_key(), b.objective_key());
        b.objective.lambda1 = 2e-3;
        assert_ne!(a.objective_key(), b.objective_key());
    }
}
