use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use fsvrg::dataset::{synth_linear, synth_separable, TaskKind};
use fsvrg::diagnostics;
use fsvrg::harness::refmin::reference_minimum;
use fsvrg::harness::spec::RefminSpec;
use fsvrg::schedule;
use fsvrg::solver::{Projection, Restart};
use fsvrg::{Algorithm, EpochSchedule, Loss, Regularizer, SolverConfig, ThetaSchedule};

create_exception!(pyfsvrg, FsvrgError, PyValueError, "Raised for any error from the solver library.");

fn to_py(e: fsvrg::Error) -> PyErr {
    FsvrgError::new_err((e.kind(), e.to_string()))
}

fn bad(message: String) -> PyErr {
    FsvrgError::new_err(("parameter", message))
}

fn parse_loss(name: &str) -> PyResult<Loss> {
    match name {
        "logistic" => Ok(Loss::Logistic),
        "squared" => Ok(Loss::Squared),
        "hinge" => Ok(Loss::Hinge),
        other => Err(bad(format!("unknown loss {other:?}; expected logistic, squared or hinge"))),
    }
}

fn parse_regularizer(name: &str, lambda1: f64, lambda2: f64) -> PyResult<Regularizer> {
    match name {
        "none" => Ok(Regularizer::None),
        "l2" => Regularizer::l2(lambda1).map_err(to_py),
        "l1" => Regularizer::l1(lambda2).map_err(to_py),
        "elastic_net" => Regularizer::elastic_net(lambda1, lambda2).map_err(to_py),
        other => Err(bad(format!("unknown regularizer {other:?}; expected none, l2, l1 or elastic_net"))),
    }
}

/// Sparse labelled examples, immutable once built.
#[pyclass(name = "Dataset", module = "pyfsvrg", frozen)]
struct PyDataset {
    inner: Arc<fsvrg::Dataset>,
}

impl PyDataset {
    fn wrap(ds: fsvrg::Dataset) -> Self {
        PyDataset { inner: Arc::new(ds) }
    }
}

#[pymethods]
impl PyDataset {
    #[staticmethod]
    #[pyo3(signature = (text, dim=None))]
    fn from_libsvm(text: &str, dim: Option<usize>) -> PyResult<Self> {
        fsvrg::Dataset::from_libsvm_str(text, dim).map(Self::wrap).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, dim=None))]
    fn load(path: std::path::PathBuf, dim: Option<usize>) -> PyResult<Self> {
        fsvrg::Dataset::from_libsvm_file(&path, dim).map(Self::wrap).map_err(to_py)
    }

    /// Rows of a dense matrix with one label each.
    #[staticmethod]
    fn from_dense(rows: Vec<Vec<f64>>, labels: Vec<f64>) -> PyResult<Self> {
        if rows.len() != labels.len() {
            return Err(bad(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        let dim = rows.first().map_or(0, Vec::len);
        let examples = rows
            .iter()
            .zip(&labels)
            .map(|(r, &b)| fsvrg::SparseExample::from_dense(r, b))
            .collect::<fsvrg::Result<Vec<_>>>()
            .map_err(to_py)?;
        fsvrg::Dataset::new(examples, dim).map(Self::wrap).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (n, d, noise=0.0, seed=0, classification=false))]
    fn synthetic_linear(n: usize, d: usize, noise: f64, seed: u64, classification: bool) -> PyResult<Self> {
        let kind = if classification { TaskKind::Classification } else { TaskKind::Regression };
        synth_linear(n, d, noise, seed, kind).map(|(ds, _)| Self::wrap(ds)).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (n, d, margin, seed=0))]
    fn synthetic_separable(n: usize, d: usize, margin: f64, seed: u64) -> PyResult<Self> {
        synth_separable(n, d, margin, seed).map(|(ds, _)| Self::wrap(ds)).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn labels(&self) -> Vec<f64> {
        self.inner.labels().collect()
    }

    fn to_libsvm(&self) -> String {
        self.inner.to_libsvm()
    }

    fn normalize_rows(&self) -> PyResult<Self> {
        self.inner.normalize_rows().map(Self::wrap).map_err(to_py)
    }

    fn subsample(&self, k: usize, seed: u64) -> PyResult<Self> {
        self.inner.subsample(k, seed).map(Self::wrap).map_err(to_py)
    }

    /// Returns `(train, test)`.
    fn split(&self, train_fraction: f64, seed: u64) -> PyResult<(Self, Self)> {
        let (a, b) = self.inner.split(train_fraction, seed).map_err(to_py)?;
        Ok((Self::wrap(a), Self::wrap(b)))
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, dim={})", self.inner.n(), self.inner.dim())
    }
}

/// `phi(x) = (1/n) sum_i loss(<a_i, x>, b_i) + g(x)`.
#[pyclass(name = "Objective", module = "pyfsvrg", frozen)]
struct PyObjective {
    inner: fsvrg::Objective,
}

#[pymethods]
impl PyObjective {
    #[new]
    #[pyo3(signature = (data, loss, regularizer="l2", lambda1=0.0, lambda2=0.0))]
    fn new(
        data: PyRef<'_, PyDataset>,
        loss: &str,
        regularizer: &str,
        lambda1: f64,
        lambda2: f64,
    ) -> PyResult<Self> {
        let reg = parse_regularizer(regularizer, lambda1, lambda2)?;
        let inner = fsvrg::Objective::new(data.inner.clone(), parse_loss(loss)?, reg).map_err(to_py)?;
        Ok(PyObjective { inner })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Largest per-example smoothness constant, or None for the hinge loss.
    #[getter]
    fn smoothness(&self) -> Option<f64> {
        self.inner.smoothness()
    }

    #[getter]
    fn mu(&self) -> f64 {
        self.inner.mu()
    }

    /// Problem case 1 to 4.
    #[getter]
    fn case(&self) -> u8 {
        self.inner.case().number()
    }

    fn phi(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.phi(&x).map_err(to_py)
    }

    fn loss_value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.inner.loss_value(&x).map_err(to_py)
    }

    fn full_grad(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if self.inner.loss().is_smooth() { self.inner.full_grad(&x) } else { self.inner.full_subgrad(&x) }
            .map_err(to_py)
    }

    fn component_grad(&self, i: usize, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if self.inner.loss().is_smooth() {
            self.inner.component_grad(i, &x)
        } else {
            self.inner.component_subgrad(i, &x)
        }
        .map_err(to_py)
    }

    /// Proximal step of the regularizer with step `eta`.
    fn prox(&self, eta: f64, y: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.regularizer().prox(eta, &y).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Objective(n={}, dim={}, loss={:?}, case={})",
            self.inner.n(),
            self.inner.dim(),
            self.inner.loss(),
            self.inner.case().number()
        )
    }
}

/// Runs one solver and returns a dict with the final iterate and the per-epoch trace.
#[pyfunction]
#[pyo3(signature = (
    objective, algorithm, *, eta=None, epochs=20, seed=0, batch_size=1,
    m1=None, rho=None, theta=None, strongly_convex_restart=None, projection_radius=None,
))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    objective: PyRef<'py, PyObjective>,
    algorithm: &str,
    eta: Option<f64>,
    epochs: usize,
    seed: u64,
    batch_size: usize,
    m1: Option<usize>,
    rho: Option<f64>,
    theta: Option<f64>,
    strongly_convex_restart: Option<bool>,
    projection_radius: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    let alg =
        Algorithm::from_name(algorithm).ok_or_else(|| bad(format!("unknown algorithm {algorithm:?}")))?;
    let obj = &objective.inner;
    let mut cfg = SolverConfig::defaults(alg, obj, eta).map_err(to_py)?;
    cfg.epochs = epochs;
    cfg.seed = seed;
    cfg.batch_size = batch_size;
    if m1.is_some() || rho.is_some() {
        cfg.epoch_schedule = EpochSchedule {
            m1: m1.unwrap_or(cfg.epoch_schedule.m1),
            rho: rho.unwrap_or(cfg.epoch_schedule.rho),
        };
    }
    if let Some(t) = theta {
        cfg.theta = ThetaSchedule::constant(t);
    }
    if let Some(sc) = strongly_convex_restart {
        cfg.restart = if sc { Restart::StronglyConvex } else { Restart::NonStronglyConvex };
    }
    if let Some(radius) = projection_radius {
        cfg.projection = Projection::L2Ball { radius };
    }
    let res = py.detach(|| fsvrg::run(obj, &cfg)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("x", res.x)?;
    out.set_item("eta", cfg.eta)?;
    out.set_item("objective", res.trace.iter().map(|r| r.objective).collect::<Vec<_>>())?;
    out.set_item("effective_passes", res.trace.iter().map(|r| r.effective_passes).collect::<Vec<_>>())?;
    out.set_item("wall_time_s", res.wall_time_s)?;
    Ok(out)
}

/// `(lhs, rhs, holds)` for the mini-batch variance bound at `x` with snapshot `snapshot`.
#[pyfunction]
#[pyo3(signature = (objective, x, snapshot, batch_size=1, tol=1e-12))]
fn check_variance_bound(
    objective: PyRef<'_, PyObjective>,
    x: Vec<f64>,
    snapshot: Vec<f64>,
    batch_size: usize,
    tol: f64,
) -> PyResult<(f64, f64, bool)> {
    let c =
        diagnostics::check_variance_bound(&objective.inner, &x, &snapshot, batch_size, tol).map_err(to_py)?;
    Ok((c.lhs, c.rhs, c.holds))
}

fn fit_dict<'py>(py: Python<'py>, fit: diagnostics::RateFit) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("slope", fit.slope)?;
    out.set_item("intercept", fit.intercept)?;
    out.set_item("r_squared", fit.r_squared)?;
    out.set_item("points_used", fit.points_used)?;
    out.set_item("saturated", fit.saturated)?;
    Ok(out)
}

/// Least-squares fit of `log gap` against the epoch index.
#[pyfunction]
#[pyo3(signature = (gaps, burn_in=diagnostics::DEFAULT_BURN_IN))]
fn fit_linear_rate(py: Python<'_>, gaps: Vec<f64>, burn_in: usize) -> PyResult<Bound<'_, PyDict>> {
    let fit = diagnostics::fit_linear_rate(&gaps, burn_in).map_err(to_py)?;
    let out = fit_dict(py, fit)?;
    out.set_item("contraction", fit.contraction())?;
    Ok(out)
}

/// Least-squares fit of `log gap` against `log epoch`.
#[pyfunction]
#[pyo3(signature = (gaps, burn_in=diagnostics::DEFAULT_BURN_IN))]
fn fit_poly_rate(py: Python<'_>, gaps: Vec<f64>, burn_in: usize) -> PyResult<Bound<'_, PyDict>> {
    fit_dict(py, diagnostics::fit_poly_rate(&gaps, burn_in).map_err(to_py)?)
}

#[pyfunction]
fn theta_sc_optimal(mu: f64, eta: f64, m_s: usize) -> PyResult<f64> {
    schedule::theta_sc_optimal(mu, eta, m_s).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (l, eta, rho_b=1.0))]
fn theta_nsc_init(l: f64, eta: f64, rho_b: f64) -> PyResult<f64> {
    schedule::theta_nsc_init(l, eta, rho_b).map_err(to_py)
}

#[pyfunction]
fn theta_nsc_next(prev: f64) -> PyResult<f64> {
    schedule::theta_nsc_next(prev).map_err(to_py)
}

#[pyfunction]
fn epoch_sizes(m1: usize, rho: f64, epochs: usize) -> PyResult<Vec<usize>> {
    schedule::epoch_sizes(m1, rho, epochs).map_err(to_py)
}

#[pyfunction]
fn rho_b(n: usize, b: usize) -> PyResult<f64> {
    schedule::rho_b(n, b).map_err(to_py)
}

/// `(value, method)`, where method is "closed_form" or "long_run".
#[pyfunction]
#[pyo3(signature = (objective, eta=None, tolerance=1e-12, max_epochs=5000))]
fn reference_min(
    py: Python<'_>,
    objective: PyRef<'_, PyObjective>,
    eta: Option<f64>,
    tolerance: f64,
    max_epochs: usize,
) -> PyResult<(f64, &'static str)> {
    let settings = RefminSpec { eta, tolerance, max_epochs, ..RefminSpec::default() };
    let obj = &objective.inner;
    let (_, rec) = py.detach(|| reference_minimum(obj, &settings)).map_err(to_py)?;
    Ok((rec.value, rec.method.tag()))
}

#[pymodule]
fn pyfsvrg(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FsvrgError", m.py().get_type::<FsvrgError>())?;
    m.add("ALGORITHMS", Algorithm::ALL.iter().map(|a| a.name()).collect::<Vec<_>>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyObjective>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(check_variance_bound, m)?)?;
    m.add_function(wrap_pyfunction!(fit_linear_rate, m)?)?;
    m.add_function(wrap_pyfunction!(fit_poly_rate, m)?)?;
    m.add_function(wrap_pyfunction!(theta_sc_optimal, m)?)?;
    m.add_function(wrap_pyfunction!(theta_nsc_init, m)?)?;
    m.add_function(wrap_pyfunction!(theta_nsc_next, m)?)?;
    m.add_function(wrap_pyfunction!(epoch_sizes, m)?)?;
    m.add_function(wrap_pyfunction!(rho_b, m)?)?;
    m.add_function(wrap_pyfunction!(reference_min, m)?)?;
    Ok(())
}
