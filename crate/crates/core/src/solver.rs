//! Variance-reduced solvers sharing one epoch loop.
//!
//! Every algorithm runs in epochs. Epoch `s` draws its samples from a ChaCha8
//! stream keyed by `(seed, s)`, so a run is reproducible bit for bit and two
//! algorithms configured with the same seed and epoch lengths see the same
//! sample sequence.
//!
//! Mini-batches of size `b > 1` are drawn without replacement and summed in
//! ascending index order; an epoch of nominal size `m_s` then performs
//! `max(1, floor(m_s / b))` inner iterations.

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Objective, Regularizer};
use crate::schedule::{rho_b, theta_nsc_init, EpochSchedule, ThetaSchedule};
use crate::trace::TraceRecord;

/// The implemented optimizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Proximal stochastic gradient with `eta_k = eta_0 / ceil(k / n)`.
    Sgd,
    /// SVRG with a gradient step on the regularizer.
    Svrg,
    /// SVRG with a proximal step.
    ProxSvrg,
    /// SVRG with doubling epochs, carrying the last iterate into the next epoch.
    SvrgPlusPlus,
    /// Katyusha's three-sequence coupling.
    Katyusha,
    /// Momentum-accelerated SVRG for smooth components.
    Fsvrg,
    /// Momentum-accelerated SVRG with sub-gradients and projection.
    FsvrgNonsmooth,
    /// Variance-reduced sub-gradient descent.
    Svrsg,
}

impl Algorithm {
    pub const ALL: [Algorithm; 8] = [
        Algorithm::Sgd,
        Algorithm::Svrg,
        Algorithm::ProxSvrg,
        Algorithm::SvrgPlusPlus,
        Algorithm::Katyusha,
        Algorithm::Fsvrg,
        Algorithm::FsvrgNonsmooth,
        Algorithm::Svrsg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Svrg => "svrg",
            Algorithm::ProxSvrg => "prox_svrg",
            Algorithm::SvrgPlusPlus => "svrg_plus_plus",
            Algorithm::Katyusha => "katyusha",
            Algorithm::Fsvrg => "fsvrg",
            Algorithm::FsvrgNonsmooth => "fsvrg_nonsmooth",
            Algorithm::Svrsg => "svrsg",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Works on sub-gradients of non-smooth components.
    pub fn is_subgradient_method(self) -> bool {
        matches!(self, Algorithm::FsvrgNonsmooth | Algorithm::Svrsg)
    }

    fn uses_snapshot(self) -> bool {
        !matches!(self, Algorithm::Sgd)
    }
}

/// How the inner iterates are initialized at the start of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Restart {
    /// `x_0 = y_0 = snapshot`.
    StronglyConvex,
    /// `y_0` carries over from the previous epoch; `x_0` follows the momentum rule.
    NonStronglyConvex,
}

/// Feasible set for the sub-gradient methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Projection {
    None,
    L2Ball { radius: f64 },
}

impl Projection {
    pub fn apply(&self, y: &mut [f64]) {
        if let Projection::L2Ball { radius } = *self {
            let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                let scale = radius / norm;
                for v in y.iter_mut() {
                    *v *= scale;
                }
            }
        }
    }
}

/// Weights for averaging the inner iterates into the next snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    Uniform,
    /// `w_k` for `k = 1, 2, ...`; must cover the longest epoch.
    Weights(Vec<f64>),
}

impl Averaging {
    #[inline]
    fn weight(&self, k: usize) -> f64 {
        match self {
            Averaging::Uniform => 1.0,
            Averaging::Weights(w) => w[k - 1],
        }
    }
}

/// Full description of one solver run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub algorithm: Algorithm,
    /// Step size (the initial step for SGD).
    pub eta: f64,
    pub epochs: usize,
    pub epoch_schedule: EpochSchedule,
    pub theta: ThetaSchedule,
    pub batch_size: usize,
    pub seed: u64,
    pub restart: Restart,
    pub projection: Projection,
    pub averaging: Averaging,
    pub katyusha_theta1: Option<f64>,
    pub katyusha_theta2: f64,
    /// Keep the per-example snapshot gradients from the full pass instead of
    /// recomputing them in every inner step.
    pub reuse_snapshot_grads: bool,
    /// Starting point; zeros when absent.
    pub x0: Option<Vec<f64>>,
}

/// Default step size as a multiple of `1/L`.
pub fn default_step(algorithm: Algorithm, l: f64) -> f64 {
    match algorithm {
        Algorithm::Fsvrg => 1.0 / (3.0 * l),
        Algorithm::SvrgPlusPlus => 1.0 / (7.0 * l),
        Algorithm::Svrg | Algorithm::ProxSvrg => 1.0 / (10.0 * l),
        Algorithm::Sgd => 1.0 / l,
        Algorithm::Katyusha => 2.0 / (3.0 * l),
        Algorithm::FsvrgNonsmooth | Algorithm::Svrsg => 1.0 / (3.0 * l),
    }
}

impl SolverConfig {
    /// Standard settings for `algorithm` on `obj`.
    ///
    /// Epochs: `m = 2n` for SVRG, Prox-SVRG, Katyusha and SVRSG; `m_1 = n/2, rho = 1.6`
    /// for both FSVRG variants; `m_1 = n/4, rho = 2` for SVRG++; `m = n` for SGD.
    /// Without an explicit `eta`, smooth problems use the default multiple of `1/L`;
    /// non-smooth problems have no default step and need one.
    pub fn defaults(algorithm: Algorithm, obj: &Objective, eta: Option<f64>) -> Result<Self> {
        let n = obj.n();
        let l = obj.smoothness();
        let eta = match (eta, l) {
            (Some(e), _) => e,
            (None, Some(l)) => match algorithm {
                Algorithm::Katyusha => 1.0 / (3.0 * katyusha_default_theta1(obj, l) * l),
                _ => default_step(algorithm, l),
            },
            (None, None) => {
                return Err(Error::Parameter(format!(
                    "{} on a non-smooth loss needs an explicit step size",
                    algorithm.name()
                )))
            }
        };
        let half = (n / 2).max(1);
        let epoch_schedule = match algorithm {
            Algorithm::Fsvrg | Algorithm::FsvrgNonsmooth => EpochSchedule { m1: half, rho: 1.6 },
            Algorithm::SvrgPlusPlus => EpochSchedule { m1: (n / 4).max(1), rho: 2.0 },
            Algorithm::Sgd => EpochSchedule::fixed(n),
            _ => EpochSchedule::fixed(2 * n),
        };
        let sc = obj.mu() > 0.0;
        let (theta, restart) = match algorithm {
            Algorithm::Fsvrg if !sc => {
                let l = obj.require_smoothness()?;
                let theta1 = theta_nsc_init(l, eta, 1.0)?;
                (ThetaSchedule::nsc_recursive(theta1), Restart::NonStronglyConvex)
            }
            Algorithm::FsvrgNonsmooth if !sc => {
                (ThetaSchedule::nsc_recursive(1.0), Restart::NonStronglyConvex)
            }
            Algorithm::Fsvrg | Algorithm::FsvrgNonsmooth => {
                (ThetaSchedule::constant(0.9), Restart::StronglyConvex)
            }
            _ => (ThetaSchedule::constant(1.0), Restart::StronglyConvex),
        };
        Ok(SolverConfig {
            algorithm,
            eta,
            epochs: 20,
            epoch_schedule,
            theta,
            batch_size: 1,
            seed: 0,
            restart,
            projection: Projection::None,
            averaging: Averaging::Uniform,
            katyusha_theta1: None,
            katyusha_theta2: 0.5,
            reuse_snapshot_grads: true,
            x0: None,
        })
    }
}

fn katyusha_default_theta1(obj: &Objective, l: f64) -> f64 {
    let m = 2.0 * obj.n() as f64;
    if obj.mu() > 0.0 {
        (m * obj.mu() / (3.0 * l)).sqrt().min(0.5)
    } else {
        0.5
    }
}

/// Snapshot point, the full (sub)gradient there, and the per-example coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub point: Vec<f64>,
    pub full_grad: Vec<f64>,
    coefficients: Vec<f64>,
}

impl Snapshot {
    /// Takes a snapshot at `point`, evaluating every component once.
    pub fn new(obj: &Objective, point: Vec<f64>) -> Result<Self> {
        if point.len() != obj.dim() {
            return Err(Error::Dimension { expected: obj.dim(), got: point.len() });
        }
        let (full_grad, coefficients) = obj.full_direction(&point);
        Ok(Snapshot { point, full_grad, coefficients })
    }

    fn refresh(&mut self, obj: &Objective) {
        let (g, c) = obj.full_direction(&self.point);
        self.full_grad = g;
        self.coefficients = c;
    }
}

/// Iterates carried through an epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    pub x: Vec<f64>,
    /// Auxiliary (momentum) iterate.
    pub y: Vec<f64>,
    /// Katyusha's third sequence.
    pub z: Vec<f64>,
    pub snapshot: Snapshot,
    pub running_sum: Vec<f64>,
    pub weight_sum: f64,
    /// Epoch index `s` (1-based once an epoch has started).
    pub epoch: usize,
    /// Inner index `k` within the current epoch.
    pub step: usize,
    sgd_steps: u64,
}

impl IterateState {
    /// All sequences start at `x0`; the snapshot is taken there.
    pub fn new(obj: &Objective, x0: Vec<f64>) -> Result<Self> {
        let snapshot = Snapshot::new(obj, x0.clone())?;
        let d = x0.len();
        Ok(IterateState {
            y: x0.clone(),
            z: x0.clone(),
            x: x0,
            snapshot,
            running_sum: vec![0.0; d],
            weight_sum: 0.0,
            epoch: 0,
            step: 0,
            sgd_steps: 0,
        })
    }

    pub fn snapshot_point(&self) -> &[f64] {
        &self.snapshot.point
    }
}

/// Inner-loop observation hooks.
#[derive(Debug)]
pub enum Event<'a> {
    /// After inner step `step` of `epoch`, with the new iterate `x`.
    Inner { epoch: usize, step: usize, x: &'a [f64] },
    /// After `epoch` with the new snapshot.
    EpochEnd { epoch: usize, snapshot: &'a [f64] },
}

/// Outcome of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// Final snapshot (the last iterate for SGD).
    pub x: Vec<f64>,
    pub trace: Vec<TraceRecord>,
    pub effective_passes: f64,
    pub wall_time_s: f64,
}

/// Per-epoch plan handed to the epoch routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochPlan {
    /// 1-based epoch index `s`.
    pub epoch: usize,
    /// Number of inner iterations.
    pub length: usize,
    /// Momentum weight for this epoch (ignored by non-momentum methods).
    pub theta: f64,
}

/// Work done in one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochWork {
    pub full_gradients: usize,
    pub component_gradients: u64,
}

impl EpochWork {
    pub fn passes(&self, n: usize) -> f64 {
        self.full_gradients as f64 + self.component_gradients as f64 / n as f64
    }
}

/// Per-epoch sample stream.
pub fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Draws a batch: one index with replacement, or `b` distinct indices sorted ascending.
pub fn sample_batch(rng: &mut ChaCha8Rng, n: usize, b: usize, out: &mut Vec<usize>) {
    out.clear();
    if b == 1 {
        out.push(rng.random_range(0..n));
    } else if b == n {
        out.extend(0..n);
    } else {
        out.extend(index::sample(rng, n, b).iter());
        out.sort_unstable();
    }
}

fn check_batch(obj: &Objective, batch: &[usize]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    if let Some(&i) = batch.iter().find(|&&i| i >= obj.n()) {
        return Err(Error::Parameter(format!("example index {i} out of range 0..{}", obj.n())));
    }
    Ok(())
}

/// `(1/b) sum_{i in I} [grad f_i(x) - grad f_i(snapshot)] + full_grad(snapshot)`
fn vr_direction_into(
    obj: &Objective,
    snap: &Snapshot,
    x: &[f64],
    batch: &[usize],
    reuse: bool,
    out: &mut [f64],
) {
    out.fill(0.0);
    let data = obj.dataset();
    for &i in batch {
        let at_x = obj.coefficient(i, x);
        let at_snap = if reuse { snap.coefficients[i] } else { obj.coefficient(i, &snap.point) };
        data.example(i).axpy(at_x - at_snap, out);
    }
    let b = batch.len() as f64;
    for (o, &m) in out.iter_mut().zip(&snap.full_grad) {
        *o = *o / b + m;
    }
}

/// Variance-reduced gradient estimator for smooth losses over an index multiset.
pub fn vr_gradient(obj: &Objective, snap: &Snapshot, x: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    if !obj.loss().is_smooth() {
        return Err(Error::WrongCase("non-smooth loss; use vr_subgradient".into()));
    }
    vr_checked(obj, snap, x, batch)
}

/// Variance-reduced sub-gradient estimator for the hinge loss.
pub fn vr_subgradient(obj: &Objective, snap: &Snapshot, x: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    if obj.loss().is_smooth() {
        return Err(Error::WrongCase("smooth loss; use vr_gradient".into()));
    }
    vr_checked(obj, snap, x, batch)
}

fn vr_checked(obj: &Objective, snap: &Snapshot, x: &[f64], batch: &[usize]) -> Result<Vec<f64>> {
    if x.len() != obj.dim() {
        return Err(Error::Dimension { expected: obj.dim(), got: x.len() });
    }
    check_batch(obj, batch)?;
    let mut out = vec![0.0; obj.dim()];
    vr_direction_into(obj, snap, x, batch, true, &mut out);
    Ok(out)
}

/// `y -= eta * (dir + grad g(x))`, the smooth-regularizer step.
#[inline]
fn gradient_step(reg: &Regularizer, y: &mut [f64], x: &[f64], eta: f64, dir: &mut [f64]) -> Result<()> {
    reg.add_grad(x, 1.0, dir)?;
    for (yj, &dj) in y.iter_mut().zip(dir.iter()) {
        *yj -= eta * dj;
    }
    Ok(())
}

/// `y = prox_{eta, g}(y - eta * dir)`
#[inline]
fn prox_step(reg: &Regularizer, y: &mut [f64], eta: f64, dir: &[f64]) -> Result<()> {
    for (yj, &dj) in y.iter_mut().zip(dir) {
        *yj -= eta * dj;
    }
    reg.prox_in_place(eta, y)
}

/// `x = theta * y + (1 - theta) * anchor`
#[inline]
fn momentum_step(x: &mut [f64], y: &[f64], anchor: &[f64], theta: f64) {
    let rest = 1.0 - theta;
    for ((xj, &yj), &aj) in x.iter_mut().zip(y).zip(anchor) {
        *xj = theta * yj + rest * aj;
    }
}

fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|t| t.is_finite())
}

type Observer<'o> = Option<&'o mut dyn FnMut(Event<'_>)>;

/// Shared inner-loop machinery.
struct Engine<'a, 'o> {
    obj: &'a Objective,
    cfg: &'a SolverConfig,
    observer: Observer<'o>,
    dir: Vec<f64>,
    batch: Vec<usize>,
}

impl<'a, 'o> Engine<'a, 'o> {
    fn new(obj: &'a Objective, cfg: &'a SolverConfig, observer: Observer<'o>) -> Self {
        Engine { obj, cfg, observer, dir: vec![0.0; obj.dim()], batch: Vec::with_capacity(cfg.batch_size) }
    }

    fn begin(&mut self, state: &mut IterateState, plan: &EpochPlan) -> EpochWork {
        state.epoch = plan.epoch;
        state.step = 0;
        state.running_sum.fill(0.0);
        state.weight_sum = 0.0;
        if self.cfg.algorithm.uses_snapshot() {
            state.snapshot.refresh(self.obj);
            EpochWork { full_gradients: 1, component_gradients: 0 }
        } else {
            EpochWork::default()
        }
    }

    fn inner_cost(&self) -> u64 {
        let b = self.cfg.batch_size as u64;
        if self.cfg.reuse_snapshot_grads {
            b
        } else {
            2 * b
        }
    }

    fn estimate(&mut self, state: &IterateState, at: &[f64], rng: &mut ChaCha8Rng) {
        sample_batch(rng, self.obj.n(), self.cfg.batch_size, &mut self.batch);
        vr_direction_into(
            self.obj,
            &state.snapshot,
            at,
            &self.batch,
            self.cfg.reuse_snapshot_grads,
            &mut self.dir,
        );
    }

    /// Accumulates `w_k * point`, checks for divergence and notifies the observer.
    fn record(&mut self, state: &mut IterateState, k: usize, which: Which) -> Result<()> {
        let w = self.cfg.averaging.weight(k);
        let point = match which {
            Which::X => &state.x,
            Which::Z => &state.z,
        };
        if !all_finite(point) || !all_finite(&state.y) {
            return Err(Error::Divergence { epoch: state.epoch, step: k, eta: self.cfg.eta });
        }
        for (s, &p) in state.running_sum.iter_mut().zip(point) {
            *s += w * p;
        }
        state.weight_sum += w;
        state.step = k;
        if let Some(obs) = self.observer.as_mut() {
            obs(Event::Inner { epoch: state.epoch, step: k, x: &state.x });
        }
        Ok(())
    }

    fn finish(&mut self, state: &mut IterateState, plan: &EpochPlan) {
        if plan.length > 0 {
            let wsum = state.weight_sum;
            for (p, &s) in state.snapshot.point.iter_mut().zip(&state.running_sum) {
                *p = s / wsum;
            }
        }
    }

    fn fsvrg_smooth(
        &mut self,
        state: &mut IterateState,
        plan: &EpochPlan,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochWork> {
        let mut work = self.begin(state, plan);
        let reg = *self.obj.regularizer();
        let eta = self.cfg.eta;
        match self.cfg.restart {
            Restart::StronglyConvex => {
                state.x.copy_from_slice(&state.snapshot.point);
                state.y.copy_from_slice(&state.snapshot.point);
            }
            Restart::NonStronglyConvex => {
                momentum_step(&mut state.x, &state.y, &state.snapshot.point, plan.theta);
            }
        }
        for k in 1..=plan.length {
            self.estimate(state, &state.x.clone(), rng);
            if reg.is_smooth() {
                gradient_step(&reg, &mut state.y, &state.x, eta, &mut self.dir)?;
            } else {
                prox_step(&reg, &mut state.y, eta, &self.dir)?;
            }
            momentum_step(&mut state.x, &state.y, &state.snapshot.point, plan.theta);
            work.component_gradients += self.inner_cost();
            self.record(state, k, Which::X)?;
        }
        self.finish(state, plan);
        Ok(work)
    }

    fn fsvrg_nonsmooth(
        &mut self,
        state: &mut IterateState,
        plan: &EpochPlan,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochWork> {
        let mut work = self.begin(state, plan);
        let reg = *self.obj.regularizer();
        let eta = self.cfg.eta;
        match self.cfg.restart {
            Restart::StronglyConvex => {
                state.x.copy_from_slice(&state.snapshot.point);
                state.y.copy_from_slice(&state.snapshot.point);
            }
            Restart::NonStronglyConvex => {
                momentum_step(&mut state.x, &state.y, &state.snapshot.point, plan.theta);
            }
        }
        for k in 1..=plan.length {
            self.estimate(state, &state.x.clone(), rng);
            gradient_step(&reg, &mut state.y, &state.x, eta, &mut self.dir)?;
            self.cfg.projection.apply(&mut state.y);
            momentum_step(&mut state.x, &state.y, &state.snapshot.point, plan.theta);
            work.component_gradients += self.inner_cost();
            self.record(state, k, Which::X)?;
        }
        self.finish(state, plan);
        Ok(work)
    }

    /// SVRG, Prox-SVRG, SVRG++ and SVRSG: plain variance-reduced steps on `x`.
    fn svrg_family(
        &mut self,
        state: &mut IterateState,
        plan: &EpochPlan,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochWork> {
        let mut work = self.begin(state, plan);
        let reg = *self.obj.regularizer();
        let eta = self.cfg.eta;
        let algorithm = self.cfg.algorithm;
        if algorithm != Algorithm::SvrgPlusPlus {
            state.x.copy_from_slice(&state.snapshot.point);
        }
        let use_prox = match algorithm {
            Algorithm::ProxSvrg => true,
            Algorithm::SvrgPlusPlus => !reg.is_smooth(),
            _ => false,
        };
        for k in 1..=plan.length {
            let x_prev = state.x.clone();
            self.estimate(state, &x_prev, rng);
            if use_prox {
                prox_step(&reg, &mut state.x, eta, &self.dir)?;
            } else {
                gradient_step(&reg, &mut state.x, &x_prev, eta, &mut self.dir)?;
            }
            if algorithm == Algorithm::Svrsg {
                self.cfg.projection.apply(&mut state.x);
            }
            work.component_gradients += self.inner_cost();
            self.record(state, k, Which::X)?;
        }
        self.finish(state, plan);
        Ok(work)
    }

    fn katyusha(
        &mut self,
        state: &mut IterateState,
        plan: &EpochPlan,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochWork> {
        let mut work = self.begin(state, plan);
        let reg = *self.obj.regularizer();
        let eta = self.cfg.eta;
        let l = self.obj.require_smoothness()?;
        let theta1 = resolve_katyusha_theta1(self.cfg, l);
        let theta2 = self.cfg.katyusha_theta2;
        let rest = 1.0 - theta1 - theta2;
        let z_step = 1.0 / (3.0 * l);
        for k in 1..=plan.length {
            for j in 0..state.x.len() {
                state.x[j] = theta1 * state.y[j] + theta2 * state.snapshot.point[j] + rest * state.z[j];
            }
            self.estimate(state, &state.x.clone(), rng);
            prox_step(&reg, &mut state.y, eta, &self.dir)?;
            state.z.copy_from_slice(&state.x);
            prox_step(&reg, &mut state.z, z_step, &self.dir)?;
            work.component_gradients += self.inner_cost();
            if !all_finite(&state.z) {
                return Err(Error::Divergence { epoch: state.epoch, step: k, eta });
            }
            self.record(state, k, Which::Z)?;
        }
        self.finish(state, plan);
        Ok(work)
    }

    fn sgd(&mut self, state: &mut IterateState, plan: &EpochPlan, rng: &mut ChaCha8Rng) -> Result<EpochWork> {
        let mut work = self.begin(state, plan);
        let reg = *self.obj.regularizer();
        let n = self.obj.n() as u64;
        let b = self.cfg.batch_size;
        let data = self.obj.dataset();
        for k in 1..=plan.length {
            state.sgd_steps += 1;
            let eta_k = self.cfg.eta / state.sgd_steps.div_ceil(n) as f64;
            sample_batch(rng, self.obj.n(), b, &mut self.batch);
            self.dir.fill(0.0);
            for &i in &self.batch {
                data.example(i).axpy(self.obj.coefficient(i, &state.x), &mut self.dir);
            }
            for d in &mut self.dir {
                *d /= b as f64;
            }
            prox_step(&reg, &mut state.x, eta_k, &self.dir)?;
            work.component_gradients += b as u64;
            self.record(state, k, Which::X)?;
        }
        if plan.length > 0 {
            state.snapshot.point.copy_from_slice(&state.x);
        }
        Ok(work)
    }

    fn epoch(
        &mut self,
        state: &mut IterateState,
        plan: &EpochPlan,
        rng: &mut ChaCha8Rng,
    ) -> Result<EpochWork> {
        let work = match self.cfg.algorithm {
            Algorithm::Fsvrg => self.fsvrg_smooth(state, plan, rng),
            Algorithm::FsvrgNonsmooth => self.fsvrg_nonsmooth(state, plan, rng),
            Algorithm::Svrg | Algorithm::ProxSvrg | Algorithm::SvrgPlusPlus | Algorithm::Svrsg => {
                self.svrg_family(state, plan, rng)
            }
            Algorithm::Katyusha => self.katyusha(state, plan, rng),
            Algorithm::Sgd => self.sgd(state, plan, rng),
        }?;
        if let Some(obs) = self.observer.as_mut() {
            obs(Event::EpochEnd { epoch: plan.epoch, snapshot: &state.snapshot.point });
        }
        Ok(work)
    }
}

#[derive(Clone, Copy)]
enum Which {
    X,
    Z,
}

fn resolve_katyusha_theta1(cfg: &SolverConfig, l: f64) -> f64 {
    cfg.katyusha_theta1.unwrap_or_else(|| (1.0 / (3.0 * l * cfg.eta)).min(0.5))
}

/// Checks that the configuration fits the objective's case.
pub fn validate(obj: &Objective, cfg: &SolverConfig) -> Result<()> {
    let alg = cfg.algorithm;
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        return Err(Error::Parameter(format!("step size {} must be positive", cfg.eta)));
    }
    if cfg.epochs == 0 {
        return Err(Error::Parameter("number of epochs must be at least 1".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_size > obj.n() {
        return Err(Error::Parameter(format!("batch size {} must lie in [1, {}]", cfg.batch_size, obj.n())));
    }
    if let Some(x0) = &cfg.x0 {
        if x0.len() != obj.dim() {
            return Err(Error::Dimension { expected: obj.dim(), got: x0.len() });
        }
    }
    let smooth_loss = obj.loss().is_smooth();
    let smooth_reg = obj.regularizer().is_smooth();
    match alg {
        Algorithm::FsvrgNonsmooth | Algorithm::Svrsg if smooth_loss => {
            return Err(Error::WrongCase(format!(
                "{} is for non-smooth components; {:?} loss is smooth",
                alg.name(),
                obj.loss()
            )))
        }
        Algorithm::Sgd | Algorithm::FsvrgNonsmooth | Algorithm::Svrsg => {}
        _ if !smooth_loss => {
            return Err(Error::WrongCase(format!(
                "{} needs smooth components; hinge loss is non-smooth",
                alg.name()
            )))
        }
        _ => {}
    }
    match alg {
        Algorithm::FsvrgNonsmooth | Algorithm::Svrsg if !smooth_reg => {
            return Err(Error::Unsupported(format!(
                "{} with a non-smooth regularizer and non-smooth components has no update rule",
                alg.name()
            )))
        }
        Algorithm::Svrg if !smooth_reg => {
            return Err(Error::Unsupported(
                "svrg takes a gradient step on the regularizer; use prox_svrg for l1 terms".into(),
            ))
        }
        _ => {}
    }
    if let Projection::L2Ball { radius } = cfg.projection {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::Parameter(format!("projection radius {radius} must be positive")));
        }
    }
    if alg == Algorithm::Katyusha {
        let l = obj.require_smoothness()?;
        let t1 = resolve_katyusha_theta1(cfg, l);
        let t2 = cfg.katyusha_theta2;
        if !((0.0..=1.0).contains(&t1) && (0.0..=1.0).contains(&t2) && t1 + t2 <= 1.0) {
            return Err(Error::Parameter(format!(
                "katyusha weights theta1 = {t1}, theta2 = {t2} need to lie in [0, 1] with sum <= 1"
            )));
        }
    }
    Ok(())
}

/// Inner iterations per epoch after dividing the nominal sizes by the batch size.
pub fn inner_lengths(cfg: &SolverConfig) -> Result<Vec<usize>> {
    let sizes = cfg.epoch_schedule.sizes(cfg.epochs)?;
    let b = cfg.batch_size.max(1);
    Ok(sizes.into_iter().map(|m| if m == 0 { 0 } else { (m / b).max(1) }).collect())
}

fn check_averaging(cfg: &SolverConfig, lengths: &[usize]) -> Result<()> {
    if let Averaging::Weights(w) = &cfg.averaging {
        let longest = lengths.iter().copied().max().unwrap_or(0);
        if w.len() < longest {
            return Err(Error::Parameter(format!(
                "{} averaging weights cannot cover an epoch of {longest} steps",
                w.len()
            )));
        }
        if w.iter().any(|&v| !(v >= 0.0 && v.is_finite()))
            || w.iter().take(longest.max(1)).sum::<f64>() <= 0.0
        {
            return Err(Error::Parameter("averaging weights must be non-negative with positive sum".into()));
        }
    }
    Ok(())
}

fn run_epoch(
    obj: &Objective,
    cfg: &SolverConfig,
    state: &mut IterateState,
    plan: &EpochPlan,
    rng: &mut ChaCha8Rng,
) -> Result<EpochWork> {
    validate(obj, cfg)?;
    Engine::new(obj, cfg, None).epoch(state, plan, rng)
}

/// One epoch of momentum-accelerated SVRG for smooth components.
pub fn fsvrg_smooth_epoch(
    obj: &Objective,
    cfg: &SolverConfig,
    state: &mut IterateState,
    plan: &EpochPlan,
    rng: &mut ChaCha8Rng,
) -> Result<EpochWork> {
    expect(cfg, Algorithm::Fsvrg)?;
    run_epoch(obj, cfg, state, plan, rng)
}

/// One epoch of the projected sub-gradient variant.
pub fn fsvrg_nonsmooth_epoch(
    obj: &Objective,
    cfg: &SolverConfig,
    state: &mut IterateState,
    plan: &EpochPlan,
    rng: &mut ChaCha8Rng,
) -> Result<EpochWork> {
    expect(cfg, Algorithm::FsvrgNonsmooth)?;
    run_epoch(obj, cfg, state, plan, rng)
}

/// One epoch of any configured algorithm.
pub fn solver_epoch(
    obj: &Objective,
    cfg: &SolverConfig,
    state: &mut IterateState,
    plan: &EpochPlan,
    rng: &mut ChaCha8Rng,
) -> Result<EpochWork> {
    run_epoch(obj, cfg, state, plan, rng)
}

fn expect(cfg: &SolverConfig, alg: Algorithm) -> Result<()> {
    if cfg.algorithm == alg {
        Ok(())
    } else {
        Err(Error::Parameter(format!("configuration is for {}, not {}", cfg.algorithm.name(), alg.name())))
    }
}

/// Runs all epochs and records the trace.
pub fn run(obj: &Objective, cfg: &SolverConfig) -> Result<RunResult> {
    run_with(obj, cfg, None)
}

/// Like [`run`], reporting every inner iterate and snapshot to `observer`.
pub fn run_observed(
    obj: &Objective,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(Event<'_>),
) -> Result<RunResult> {
    run_with(obj, cfg, Some(observer))
}

fn run_with(obj: &Objective, cfg: &SolverConfig, observer: Observer<'_>) -> Result<RunResult> {
    validate(obj, cfg)?;
    let lengths = inner_lengths(cfg)?;
    check_averaging(cfg, &lengths)?;
    let thetas = match cfg.algorithm {
        Algorithm::Fsvrg | Algorithm::FsvrgNonsmooth => cfg.theta.weights(&lengths, cfg.eta)?,
        _ => vec![1.0; lengths.len()],
    };
    // Rejects batch sizes the variance factor cannot describe.
    rho_b(obj.n(), cfg.batch_size)?;

    let start = Instant::now();
    let x0 = cfg.x0.clone().unwrap_or_else(|| vec![0.0; obj.dim()]);
    let mut state = IterateState::new(obj, x0)?;
    let mut passes = 0.0;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(TraceRecord {
        epoch: 0,
        effective_passes: 0.0,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective: obj.phi_unchecked(&state.snapshot.point),
        gap: None,
    });

    let mut engine = Engine::new(obj, cfg, observer);
    for (s0, (&length, &theta)) in lengths.iter().zip(&thetas).enumerate() {
        let plan = EpochPlan { epoch: s0 + 1, length, theta };
        let mut rng = epoch_rng(cfg.seed, plan.epoch);
        let work = engine.epoch(&mut state, &plan, &mut rng)?;
        passes += work.passes(obj.n());
        let objective = obj.phi_unchecked(&state.snapshot.point);
        if !objective.is_finite() {
            return Err(Error::Divergence { epoch: plan.epoch, step: length, eta: cfg.eta });
        }
        trace.push(TraceRecord {
            epoch: plan.epoch,
            effective_passes: passes,
            wall_time_s: start.elapsed().as_secs_f64(),
            objective,
            gap: None,
        });
    }
    Ok(RunResult {
        x: state.snapshot.point,
        trace,
        effective_passes: passes,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
