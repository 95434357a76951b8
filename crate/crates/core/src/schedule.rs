//! Momentum-weight schedules and growing epoch sizes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimal constant weight for the strongly convex case, `mu * eta * m_s / 2`,
/// clamped to 1 so the momentum step stays a convex combination.
pub fn theta_sc_optimal(mu: f64, eta: f64, m_s: usize) -> Result<f64> {
    if mu <= 0.0 || !mu.is_finite() {
        return Err(Error::WrongCase(format!("strongly convex weight needs mu > 0 (got {mu})")));
    }
    check_step(eta)?;
    if m_s == 0 {
        return Err(Error::Parameter("epoch size must be at least 1".into()));
    }
    Ok((mu * eta * m_s as f64 / 2.0).min(1.0))
}

/// First weight of the non-strongly convex recursion, `1 - rho(b) L eta / (1 - L eta)`.
pub fn theta_nsc_init(l: f64, eta: f64, rho_b: f64) -> Result<f64> {
    check_step(eta)?;
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::Parameter(format!("smoothness constant {l} must be positive")));
    }
    if !(0.0..=1.0).contains(&rho_b) {
        return Err(Error::Parameter(format!("batch fraction {rho_b} must lie in [0, 1]")));
    }
    let le = l * eta;
    let theta = if le < 1.0 { 1.0 - rho_b * le / (1.0 - le) } else { f64::NEG_INFINITY };
    if theta.is_nan() || theta <= 0.0 {
        let bound = 1.0 / ((1.0 + rho_b) * l);
        return Err(Error::StepTooLarge(format!(
            "eta = {eta} gives L*eta = {le}; need eta < {bound:e} (= 1/((1 + rho(b)) L)) for a positive initial weight"
        )));
    }
    Ok(theta)
}

/// `(sqrt(t^4 + 4 t^2) - t^2) / 2`, the accelerated weight recursion.
pub fn theta_nsc_next(prev: f64) -> Result<f64> {
    if !(prev > 0.0 && prev <= 1.0) {
        return Err(Error::Parameter(format!("previous weight {prev} must lie in (0, 1]")));
    }
    let sq = prev * prev;
    Ok(((sq * sq + 4.0 * sq).sqrt() - sq) / 2.0)
}

/// Mini-batch variance factor `(n - b) / ((n - 1) b)` for sampling without replacement.
pub fn rho_b(n: usize, b: usize) -> Result<f64> {
    if b == 0 || b > n {
        return Err(Error::Parameter(format!("batch size {b} must lie in [1, {n}]")));
    }
    if n == 1 {
        return Ok(0.0);
    }
    Ok((n - b) as f64 / ((n - 1) as f64 * b as f64))
}

/// Epoch sizes `ceil(rho^(s-1) * m1)` for `s = 1..=epochs`.
///
/// The power is accumulated by repeated multiplication in epoch order
/// (`p_1 = 1`, `p_{s+1} = p_s * rho`) so every platform computes the same ceilings.
pub fn epoch_sizes(m1: usize, rho: f64, epochs: usize) -> Result<Vec<usize>> {
    if m1 == 0 {
        return Err(Error::Parameter("initial epoch size must be at least 1".into()));
    }
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::Parameter(format!("epoch growth {rho} must be >= 1")));
    }
    if epochs == 0 {
        return Err(Error::Parameter("number of epochs must be at least 1".into()));
    }
    let mut sizes = Vec::with_capacity(epochs);
    let mut power = 1.0f64;
    for _ in 0..epochs {
        let m = (power * m1 as f64).ceil();
        if m > 9.007_199_254_740_992e15 {
            return Err(Error::Parameter(format!("epoch size overflows after {} epochs", sizes.len())));
        }
        sizes.push(m as usize);
        power *= rho;
    }
    Ok(sizes)
}

/// `m_s = ceil(rho^(s-1) m1)`; `rho = 1` gives fixed-size epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochSchedule {
    pub m1: usize,
    pub rho: f64,
}

impl EpochSchedule {
    pub fn fixed(m: usize) -> Self {
        EpochSchedule { m1: m, rho: 1.0 }
    }

    pub fn sizes(&self, epochs: usize) -> Result<Vec<usize>> {
        epoch_sizes(self.m1, self.rho, epochs)
    }
}

/// How the momentum weight evolves across epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThetaMode {
    /// Fixed weight for every epoch.
    Constant { theta: f64 },
    /// `min(mu eta m_s / 2, 1)`, recomputed for each epoch's length.
    ScOptimal { mu: f64 },
    /// `theta_1` followed by the accelerated recursion.
    NscRecursive { theta1: f64 },
}

/// A weight mode plus an optional upper cap (the mini-batch admissibility bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSchedule {
    pub mode: ThetaMode,
    pub cap: Option<f64>,
}

impl ThetaSchedule {
    pub fn constant(theta: f64) -> Self {
        ThetaSchedule { mode: ThetaMode::Constant { theta }, cap: None }
    }

    pub fn sc_optimal(mu: f64) -> Self {
        ThetaSchedule { mode: ThetaMode::ScOptimal { mu }, cap: None }
    }

    pub fn nsc_recursive(theta1: f64) -> Self {
        ThetaSchedule { mode: ThetaMode::NscRecursive { theta1 }, cap: None }
    }

    /// Caps every weight at `1 - rho(b) L eta / (1 - L eta)`.
    pub fn with_batch_cap(mut self, l: f64, eta: f64, rho_b: f64) -> Result<Self> {
        self.cap = Some(theta_nsc_init(l, eta, rho_b)?);
        Ok(self)
    }

    /// Weights for each epoch given the epoch lengths.
    pub fn weights(&self, epoch_lengths: &[usize], eta: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(epoch_lengths.len());
        match self.mode {
            ThetaMode::Constant { theta } => {
                check_weight(theta)?;
                out.resize(epoch_lengths.len(), theta);
            }
            ThetaMode::ScOptimal { mu } => {
                for &m in epoch_lengths {
                    out.push(theta_sc_optimal(mu, eta, m.max(1))?);
                }
            }
            ThetaMode::NscRecursive { theta1 } => {
                check_weight(theta1)?;
                let mut theta = theta1;
                for s in 0..epoch_lengths.len() {
                    if s > 0 {
                        theta = theta_nsc_next(theta)?;
                    }
                    out.push(theta);
                }
            }
        }
        if let Some(cap) = self.cap {
            for t in &mut out {
                *t = t.min(cap);
            }
        }
        Ok(out)
    }
}

fn check_weight(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("momentum weight {theta} must lie in (0, 1]")))
    }
}

fn check_step(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("step size {eta} must be positive")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sc_optimal_weight() {
        assert!((theta_sc_optimal(0.01, 0.1, 1000).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(theta_sc_optimal(1.0, 1.0, 4).unwrap(), 1.0);
        assert!(matches!(theta_sc_optimal(0.0, 0.1, 10), Err(Error::WrongCase(_))));
    }

    #[test]
    fn nsc_init() {
        assert!((theta_nsc_init(1.0, 1.0 / 3.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(theta_nsc_init(1.0, 0.3, 0.0).unwrap(), 1.0);
        let err = theta_nsc_init(1.0, 0.6, 1.0).unwrap_err();
        assert!(matches!(err, Error::StepTooLarge(_)));
        assert!(err.to_string().contains("5e-1"), "{err}");
        assert!(theta_nsc_init(1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn nsc_next_from_one() {
        let t = theta_nsc_next(1.0).unwrap();
        assert!((t - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
        assert!((t - 0.618_033_988_7).abs() < 1e-10);
        assert!(theta_nsc_next(0.0).is_err());
        assert!(theta_nsc_next(1.5).is_err());
    }

    #[test]
    fn nsc_sequence_properties_to_one_hundred() {
        let mut theta = 1.0;
        for s in 1..=100usize {
            assert!(theta <= 2.0 / (s as f64 + 1.0) + 1e-12, "s = {s}");
            if s >= 13 {
                assert!(theta <= 2.0 / (s as f64 + 2.0) + 1e-12, "s = {s}");
            }
            let next = theta_nsc_next(theta).unwrap();
            assert!((1.0 - next) / (next * next) <= 1.0 / (theta * theta) + 1e-12);
            assert!(next < theta);
            theta = next;
        }
    }

    #[test]
    fn batch_fraction() {
        assert_eq!(rho_b(10, 1).unwrap(), 1.0);
        assert_eq!(rho_b(10, 10).unwrap(), 0.0);
        assert!((rho_b(10, 2).unwrap() - 8.0 / 18.0).abs() < 1e-15);
        assert_eq!(rho_b(1, 1).unwrap(), 0.0);
        assert!(rho_b(10, 0).is_err());
        assert!(rho_b(10, 11).is_err());
    }

    #[test]
    fn epoch_size_examples() {
        assert_eq!(epoch_sizes(10, 2.0, 4).unwrap(), vec![10, 20, 40, 80]);
        assert_eq!(epoch_sizes(10, 1.6, 3).unwrap(), vec![10, 16, 26]);
        assert_eq!(epoch_sizes(7, 1.0, 3).unwrap(), vec![7, 7, 7]);
        assert!(epoch_sizes(0, 2.0, 3).is_err());
        assert!(epoch_sizes(1, 0.5, 3).is_err());
        assert!(epoch_sizes(1, 2.0, 0).is_err());
    }

    #[test]
    fn schedules_emit_per_epoch_weights() {
        let lens = [10, 20, 40];
        assert_eq!(ThetaSchedule::constant(0.9).weights(&lens, 0.1).unwrap(), vec![0.9; 3]);
        let sc = ThetaSchedule::sc_optimal(0.1).weights(&lens, 0.5).unwrap();
        assert_eq!(sc, vec![0.25, 0.5, 1.0]);
        let nsc = ThetaSchedule::nsc_recursive(1.0).weights(&lens, 0.1).unwrap();
        assert_eq!(nsc[0], 1.0);
        assert_eq!(nsc[1], theta_nsc_next(1.0).unwrap());
        let capped = ThetaSchedule::constant(0.9)
            .with_batch_cap(1.0, 1.0 / 3.0, 1.0)
            .unwrap()
            .weights(&lens, 1.0 / 3.0)
            .unwrap();
        assert!(capped.iter().all(|&t| (t - 0.5).abs() < 1e-15));
        assert!(ThetaSchedule::constant(0.0).weights(&lens, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn nsc_next_is_monotone(a in 1e-6f64..1.0, b in 1e-6f64..1.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            prop_assume!(lo < hi);
            prop_assert!(theta_nsc_next(lo).unwrap() < theta_nsc_next(hi).unwrap());
        }

        #[test]
        fn nsc_next_stays_in_range(t in 1e-9f64..=1.0) {
            let next = theta_nsc_next(t).unwrap();
            prop_assert!(next > 0.0 && next < t);
        }

        #[test]
        fn epoch_sizes_grow(m1 in 1usize..1000, rho in 1.01f64..3.0, s in 1usize..12) {
            let sizes = epoch_sizes(m1, rho, s).unwrap();
            prop_assert_eq!(sizes[0], m1);
            prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
            for (k, &m) in sizes.iter().enumerate() {
                let exact = m1 as f64 * rho.powi(k as i32);
                prop_assert!(m as f64 >= exact * (1.0 - 1e-12) && (m as f64) < exact * (1.0 + 1e-12) + 1.0);
            }
        }

        #[test]
        fn dyadic_growth_is_exact(m1 in 1usize..1000, s in 1usize..20) {
            let sizes = epoch_sizes(m1, 2.0, s).unwrap();
            for (k, &m) in sizes.iter().enumerate() {
                prop_assert_eq!(m, m1 << k);
            }
        }
    }
}
