//! Checks of the quantitative claims behind the solvers: the variance bound of
//! the estimator, convergence-rate fits and the non-strongly-convex bound.
//!
//! Everything here is a pure function of its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::schedule::rho_b;
use crate::trace::TraceRecord;

/// Both sides of the estimator variance bound at one `(x, snapshot, b)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceCheck {
    /// `E ||g_I - grad f(x)||^2` over batches `I` of `b` distinct indices.
    pub lhs: f64,
    /// `2 L rho(b) [f(snapshot) - f(x) + <grad f(x), x - snapshot>]`
    pub rhs: f64,
    pub holds: bool,
}

impl VarianceCheck {
    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// Exact variance of the mini-batch estimator compared against its bound.
///
/// With `v_i = grad f_i(x) - grad f_i(snapshot)`, sampling `b` distinct indices
/// gives `E ||g_I - grad f(x)||^2 = (n - b) / (b (n - 1)) * (1/n) sum ||v_i - mean(v)||^2`,
/// which for `b = 1` is the plain enumeration over all indices. `f` excludes the
/// regularizer, whose gradient cancels from both sides.
pub fn check_variance_bound(
    obj: &Objective,
    x: &[f64],
    snapshot: &[f64],
    b: usize,
    tol: f64,
) -> Result<VarianceCheck> {
    if !obj.loss().is_smooth() {
        return Err(Error::WrongCase("variance bound needs a smooth loss".into()));
    }
    let d = obj.dim();
    for v in [x, snapshot] {
        if v.len() != d {
            return Err(Error::Dimension { expected: d, got: v.len() });
        }
    }
    let l = obj.require_smoothness()?;
    let n = obj.n();
    let rho = rho_b(n, b)?;

    let data = obj.dataset();
    let mut diffs = Vec::with_capacity(n);
    let mut mean = vec![0.0; d];
    for i in 0..n {
        let c = obj.coefficient(i, x) - obj.coefficient(i, snapshot);
        let mut v = vec![0.0; d];
        data.example(i).axpy(c, &mut v);
        for (m, vj) in mean.iter_mut().zip(&v) {
            *m += vj / n as f64;
        }
        diffs.push(v);
    }
    let spread =
        diffs.iter().map(|v| v.iter().zip(&mean).map(|(a, m)| (a - m) * (a - m)).sum::<f64>()).sum::<f64>()
            / n as f64;
    let lhs = if b == n { 0.0 } else { rho * spread };

    let fx = obj.loss_value_unchecked(x);
    let fs = obj.loss_value_unchecked(snapshot);
    let (grad, _) = obj.full_direction(x);
    let inner: f64 = grad.iter().zip(x.iter().zip(snapshot)).map(|(g, (a, s))| g * (a - s)).sum();
    let rhs = 2.0 * l * rho * (fs - fx + inner);
    Ok(VarianceCheck { lhs, rhs, holds: lhs <= rhs + tol })
}

/// Whether a fit regresses on the epoch index or on its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `ln gap` against `s`.
    Linear,
    /// `ln gap` against `ln(s + 2)`.
    Polynomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub regime: Regime,
    pub points_used: usize,
    /// The gap series hit zero or below and was cut there.
    pub saturated: bool,
}

impl RateFit {
    /// Per-epoch contraction factor for a linear-regime fit.
    pub fn contraction(&self) -> f64 {
        self.slope.exp()
    }
}

/// Epochs skipped at the start of a trace before fitting.
pub const DEFAULT_BURN_IN: usize = 2;
/// Minimum number of points a fit accepts.
pub const MIN_FIT_POINTS: usize = 5;

/// Gap per epoch of a trace; records without a gap become NaN.
pub fn gaps(trace: &[TraceRecord]) -> Vec<f64> {
    trace.iter().map(|r| r.gap.unwrap_or(f64::NAN)).collect()
}

/// Fits `ln gap_s = a + slope * s` over `s >= burn_in`. `gaps[s]` is the gap after epoch `s`.
pub fn fit_linear_rate(gaps: &[f64], burn_in: usize) -> Result<RateFit> {
    fit(gaps, burn_in, Regime::Linear)
}

/// Fits `ln gap_s = a + slope * ln(s + 2)` over `s >= burn_in`.
pub fn fit_poly_rate(gaps: &[f64], burn_in: usize) -> Result<RateFit> {
    fit(gaps, burn_in, Regime::Polynomial)
}

fn fit(gaps: &[f64], burn_in: usize, regime: Regime) -> Result<RateFit> {
    if let Some(s) = gaps.iter().position(|g| g.is_nan()) {
        return Err(Error::InvalidData(format!("gap at epoch {s} is missing")));
    }
    let mut points = Vec::new();
    let mut saturated = false;
    for (s, &g) in gaps.iter().enumerate().skip(burn_in) {
        if g <= 0.0 {
            saturated = true;
            break;
        }
        let t = match regime {
            Regime::Linear => s as f64,
            Regime::Polynomial => (s as f64 + 2.0).ln(),
        };
        points.push((t, g.ln()));
    }
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InvalidData(format!(
            "{} positive gaps after a burn-in of {burn_in}; a rate fit needs {MIN_FIT_POINTS}",
            points.len()
        )));
    }
    let (slope, intercept, r_squared) = least_squares(&points);
    Ok(RateFit { slope, intercept, r_squared, regime, points_used: points.len(), saturated })
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64, f64) {
    let k = points.len() as f64;
    let mt = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let stt: f64 = points.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sty: f64 = points.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse: f64 = points.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    (slope, intercept, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    /// `bounds[j]` belongs to epoch `j + 1`.
    pub bounds: Vec<f64>,
    pub satisfied: bool,
}

/// `4 (1 - theta_1) / (theta_1^2 (S + 2)^2) gap_0 + (2 / eta) / (m_1 (S + 2)^2) dist_0^2`
pub fn theorem2_bound(s: usize, theta1: f64, eta: f64, m1: usize, gap0: f64, dist0_sq: f64) -> f64 {
    let q = (s as f64 + 2.0).powi(2);
    4.0 * (1.0 - theta1) / (theta1 * theta1 * q) * gap0 + (2.0 / eta) / (m1 as f64 * q) * dist0_sq
}

/// Compares `gaps[s]` for `s >= 1` against the non-strongly-convex bound.
pub fn check_theorem2_bound(
    gaps: &[f64],
    theta1: f64,
    eta: f64,
    m1: usize,
    gap0: f64,
    dist0_sq: f64,
) -> Result<BoundCheck> {
    if !(theta1 > 0.0 && theta1 <= 1.0) || eta.is_nan() || eta <= 0.0 || m1 == 0 {
        return Err(Error::Parameter(format!(
            "bound needs theta1 in (0, 1], eta > 0 and m1 >= 1 (got {theta1}, {eta}, {m1})"
        )));
    }
    let bounds: Vec<f64> =
        (1..gaps.len()).map(|s| theorem2_bound(s, theta1, eta, m1, gap0, dist0_sq)).collect();
    let satisfied = gaps.iter().skip(1).zip(&bounds).all(|(g, b)| g <= b);
    Ok(BoundCheck { bounds, satisfied })
}

/// Median with the midpoint convention for even lengths; NaN for empty input.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    match k {
        0 => f64::NAN,
        _ if k % 2 == 1 => v[k / 2],
        _ => 0.5 * (v[k / 2 - 1] + v[k / 2]),
    }
}

/// Lower median: always an element of the input.
pub fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        f64::NAN
    } else {
        v[(v.len() - 1) / 2]
    }
}

/// Epoch-wise median of equally long series.
pub fn median_series(series: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    if let Some(bad) = series.iter().find(|s| s.len() != first.len()) {
        return Err(Error::Dimension { expected: first.len(), got: bad.len() });
    }
    Ok((0..first.len()).map(|j| median(&series.iter().map(|s| s[j]).collect::<Vec<_>>())).collect())
}
