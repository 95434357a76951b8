use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsvrg::harness::io::{read_manifest, read_refmin, read_trace, RefminMethod};

const RIDGE_SPEC: &str = r#"
output = "out"
seeds = [1, 2]
epochs = 6

[dataset]
synthetic = { kind = "linear", n = 200, d = 8, task = "regression", noise = 0.1, seed = 4 }

[objective]
loss = "squared"
regularizer = "l2"
lambda1 = 1e-2

[[solver]]
algorithm = "fsvrg"

[[solver]]
algorithm = "svrg"

[[solver]]
name = "svrg_half_step"
algorithm = "svrg"
step_scale = 0.5
"#;

const SVM_SPEC: &str = r#"
output = "svm_out"
seeds = [0]
epochs = 5

[dataset]
synthetic = { kind = "separable", n = 200, d = 6, margin = 0.2, seed = 2 }

[objective]
loss = "hinge"
regularizer = "l2"
lambda1 = 5e-6

[[solver]]
algorithm = "fsvrg_nonsmooth"
eta = 0.1

[[solver]]
algorithm = "sgd"
eta = 0.3

[svm]
train_fraction = 0.5
split_seed = 1
"#;

fn fsvrg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsvrg")).args(args).current_dir(cwd).output().unwrap()
}

fn write_spec(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).trim().to_string()
}

#[test]
fn run_refmin_compare_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "ridge.toml", RIDGE_SPEC);

    let out = fsvrg(&["run", &spec], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let listed = String::from_utf8(out.stdout).unwrap();
    assert_eq!(listed.lines().count(), 6);

    let out_dir = dir.path().join("out");
    let manifest = read_manifest(&out_dir).unwrap();
    assert_eq!(manifest.len(), 6);
    assert!(manifest.iter().any(|e| e.solver == "svrg_half_step" && e.seed == 2));
    for e in &manifest {
        let trace = read_trace(&out_dir.join(&e.file)).unwrap();
        assert_eq!(trace.len(), 7);
    }

    let out = fsvrg(&["refmin", &spec], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let rec = read_refmin(&out_dir).unwrap();
    assert_eq!(rec.method, RefminMethod::ClosedForm);
    assert!(String::from_utf8(out.stdout).unwrap().contains("closed_form"));

    let out = fsvrg(&["compare", out_dir.to_str().unwrap()], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("solver\ttolerance\tpasses"));
    assert!(table.lines().skip(1).any(|l| l.starts_with("fsvrg\t")));
    assert!(out_dir.join("comparison.csv").exists());
    assert!(out_dir.join("summary.csv").exists());
}

#[test]
fn rerun_reproduces_objectives() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "ridge.toml", RIDGE_SPEC);
    let out_dir = dir.path().join("out");
    let read_all = || {
        let mut m = read_manifest(&out_dir).unwrap();
        m.sort_by(|a, b| a.file.cmp(&b.file));
        m.iter()
            .map(|e| {
                read_trace(&out_dir.join(&e.file)).unwrap().iter().map(|r| r.objective.to_bits()).collect()
            })
            .collect::<Vec<Vec<u64>>>()
    };
    assert!(fsvrg(&["run", &spec], dir.path()).status.success());
    let first = read_all();
    assert!(fsvrg(&["run", &spec], dir.path()).status.success());
    assert_eq!(read_all(), first);
}

#[test]
fn svm_writes_accuracy_traces() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "svm.toml", SVM_SPEC);
    let out = fsvrg(&["svm", &spec], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
    let path = dir.path().join("svm_out").join("svm_fsvrg_nonsmooth_seed0.csv");
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "epoch,effective_passes,wall_time_s,objective,train_accuracy,test_accuracy"
    );
    assert_eq!(lines.count(), 6);
    assert!(dir.path().join("svm_out").join("svm_sgd_seed0.csv").exists());
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "missing.toml",
        r#"
output = "out"
seeds = [0]
epochs = 2

[dataset]
path = "no_such_file.libsvm"

[objective]
loss = "logistic"
regularizer = "l2"
lambda1 = 1e-3

[[solver]]
algorithm = "fsvrg"
"#,
    );
    let out = fsvrg(&["run", &spec], dir.path());
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=io: "), "{line}");
    assert!(line.contains("no_such_file.libsvm"), "{line}");
}

#[test]
fn unknown_field_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let text = RIDGE_SPEC.replace("step_scale = 0.5", "step_scal = 0.5");
    let spec = write_spec(dir.path(), "typo.toml", &text);
    let out = fsvrg(&["run", &spec], dir.path());
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind=spec: "), "{line}");
    assert!(line.contains("step_scal"), "{line}");
    assert_eq!(line.lines().count(), 1);
}

#[test]
fn step_too_large_fails_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let text = RIDGE_SPEC.replace("algorithm = \"fsvrg\"", "algorithm = \"fsvrg\"\neta = 100.0");
    let spec = write_spec(dir.path(), "big.toml", &text);
    let out = fsvrg(&["run", &spec], dir.path());
    assert!(!out.status.success());
    let line = stderr_line(&out);
    assert!(line.starts_with("error kind="), "{line}");
    assert!(!dir.path().join("out").join("manifest.txt").exists());
}

#[test]
fn compare_without_refmin_fails() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "ridge.toml", RIDGE_SPEC);
    assert!(fsvrg(&["run", &spec], dir.path()).status.success());
    let out = fsvrg(&["compare", "out"], dir.path());
    assert!(!out.status.success());
    assert!(stderr_line(&out).contains("refmin.txt"));

    let out = fsvrg(&["compare", "out", "--refmin", "0.0"], dir.path());
    assert!(out.status.success(), "{}", stderr_line(&out));
}
