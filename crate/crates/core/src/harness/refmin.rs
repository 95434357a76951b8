//! Reference minima: exact for ridge regression, otherwise a long
//! variance-reduced run stopped once successive epochs agree.

use nalgebra::{DMatrix, DVector};

use super::io::{RefminMethod, RefminRecord};
use super::spec::RefminSpec;
use crate::error::{Error, Result};
use crate::objective::{Loss, Objective, Regularizer};
use crate::schedule::EpochSchedule;
use crate::solver::{epoch_rng, solver_epoch, Algorithm, EpochPlan, IterateState, SolverConfig};

/// Solves `(A^T A + n lambda1 I) x = A^T b` when the objective is squared loss
/// with an l2 (or no) penalty. `None` for other objectives or a singular system.
pub fn ridge_minimizer(obj: &Objective) -> Option<Vec<f64>> {
    let lambda1 = match (obj.loss(), obj.regularizer()) {
        (Loss::Squared, Regularizer::L2 { lambda1 }) => *lambda1,
        (Loss::Squared, Regularizer::None) => 0.0,
        _ => return None,
    };
    let (n, d) = (obj.n(), obj.dim());
    let data = obj.dataset();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for ex in data.examples() {
        for (&j, &vj) in ex.indices().iter().zip(ex.values()) {
            rhs[j] += vj * ex.label();
            for (&k, &vk) in ex.indices().iter().zip(ex.values()) {
                gram[(j, k)] += vj * vk;
            }
        }
    }
    for j in 0..d {
        gram[(j, j)] += n as f64 * lambda1;
    }
    let chol = gram.cholesky()?;
    Some(chol.solve(&rhs).iter().copied().collect())
}

/// Minimizer and value from a long run of Prox-SVRG (smooth losses) or SVRSG (hinge).
pub fn long_run_minimum(obj: &Objective, settings: &RefminSpec) -> Result<(Vec<f64>, f64)> {
    let smooth = obj.loss().is_smooth();
    let (algorithm, eta) = match (smooth, settings.eta) {
        (true, Some(eta)) => (Algorithm::ProxSvrg, eta),
        (true, None) => (Algorithm::ProxSvrg, 1.0 / (10.0 * obj.require_smoothness()?)),
        (false, Some(eta)) => (Algorithm::Svrsg, eta),
        (false, None) => {
            return Err(Error::Parameter("a reference minimum for the hinge loss needs refmin.eta".into()))
        }
    };
    let mut cfg = SolverConfig::defaults(algorithm, obj, Some(eta))?;
    cfg.epochs = settings.max_epochs.max(1);
    cfg.seed = settings.seed;
    cfg.epoch_schedule = EpochSchedule::fixed(2 * obj.n());
    let mut state = IterateState::new(obj, vec![0.0; obj.dim()])?;
    let mut prev = obj.phi_unchecked(state.snapshot_point());
    let mut best = (state.snapshot_point().to_vec(), prev);
    for s in 1..=settings.max_epochs {
        let plan = EpochPlan { epoch: s, length: 2 * obj.n(), theta: 1.0 };
        solver_epoch(obj, &cfg, &mut state, &plan, &mut epoch_rng(cfg.seed, s))?;
        let value = obj.phi_unchecked(state.snapshot_point());
        if value < best.1 {
            best = (state.snapshot_point().to_vec(), value);
        }
        if (value - prev).abs() < settings.tolerance {
            return Ok(best);
        }
        prev = value;
    }
    Err(Error::BudgetExhausted { epochs: settings.max_epochs, best: best.1 })
}

/// Picks the closed form when available and records which method was used.
pub fn reference_minimum(obj: &Objective, settings: &RefminSpec) -> Result<(Vec<f64>, RefminRecord)> {
    if let Some(x) = ridge_minimizer(obj) {
        let value = obj.phi(&x)?;
        return Ok((x, RefminRecord { value, method: RefminMethod::ClosedForm }));
    }
    let (x, value) = long_run_minimum(obj, settings)?;
    Ok((x, RefminRecord { value, method: RefminMethod::LongRun }))
}
