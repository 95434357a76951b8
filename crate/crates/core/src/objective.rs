//! Composite objectives `phi(x) = (1/n) sum_i f_i(x) + g(x)` over a sparse dataset.
//!
//! Every loss here is a function of the margin `z = <a_i, x>`, so a component
//! (sub)gradient is always a scalar coefficient times the row `a_i`. Solvers work
//! with those coefficients directly; the dense-vector operations below are the
//! public, easy-to-check surface.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Per-example loss family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// `ln(1 + exp(-b z))`
    Logistic,
    /// `(z - b)^2`
    Squared,
    /// `max(0, 1 - b z)`
    Hinge,
}

impl Loss {
    pub fn is_smooth(self) -> bool {
        !matches!(self, Loss::Hinge)
    }

    /// `c` such that the component smoothness constant is `c * ||a_i||^2`.
    pub fn curvature(self) -> Option<f64> {
        match self {
            Loss::Logistic => Some(0.25),
            Loss::Squared => Some(2.0),
            Loss::Hinge => None,
        }
    }

    #[inline]
    pub fn value(self, z: f64, b: f64) -> f64 {
        match self {
            Loss::Logistic => softplus(-b * z),
            Loss::Squared => {
                let r = z - b;
                r * r
            }
            Loss::Hinge => (1.0 - b * z).max(0.0),
        }
    }

    /// Derivative in the margin. For the hinge this is the sub-gradient element
    /// `-b` on the active side and `0` otherwise, kink included.
    #[inline]
    pub fn derivative(self, z: f64, b: f64) -> f64 {
        match self {
            Loss::Logistic => -b * sigmoid(-b * z),
            Loss::Squared => 2.0 * (z - b),
            Loss::Hinge => {
                if 1.0 - b * z > 0.0 {
                    -b
                } else {
                    0.0
                }
            }
        }
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Regularizer `g(x) = lambda1 ||x||^2 + lambda2 ||x||_1` and its special cases.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Regularizer {
    None,
    L2 { lambda1: f64 },
    L1 { lambda2: f64 },
    ElasticNet { lambda1: f64, lambda2: f64 },
}

impl Regularizer {
    pub fn l2(lambda1: f64) -> Result<Self> {
        check_weight("lambda1", lambda1)?;
        Ok(Regularizer::L2 { lambda1 })
    }

    pub fn l1(lambda2: f64) -> Result<Self> {
        check_weight("lambda2", lambda2)?;
        Ok(Regularizer::L1 { lambda2 })
    }

    pub fn elastic_net(lambda1: f64, lambda2: f64) -> Result<Self> {
        check_weight("lambda1", lambda1)?;
        check_weight("lambda2", lambda2)?;
        Ok(Regularizer::ElasticNet { lambda1, lambda2 })
    }

    fn weights(&self) -> (f64, f64) {
        match *self {
            Regularizer::None => (0.0, 0.0),
            Regularizer::L2 { lambda1 } => (lambda1, 0.0),
            Regularizer::L1 { lambda2 } => (0.0, lambda2),
            Regularizer::ElasticNet { lambda1, lambda2 } => (lambda1, lambda2),
        }
    }

    pub fn lambda1(&self) -> f64 {
        self.weights().0
    }

    pub fn lambda2(&self) -> f64 {
        self.weights().1
    }

    /// Differentiable everywhere (no l1 part).
    pub fn is_smooth(&self) -> bool {
        matches!(self, Regularizer::None | Regularizer::L2 { .. })
    }

    /// Strong-convexity modulus certified by the `lambda1 ||x||^2` term.
    pub fn strong_convexity(&self) -> f64 {
        2.0 * self.lambda1()
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let (l1, l2) = self.weights();
        let mut v = 0.0;
        if l1 != 0.0 {
            v += l1 * x.iter().map(|t| t * t).sum::<f64>();
        }
        if l2 != 0.0 {
            v += l2 * x.iter().map(|t| t.abs()).sum::<f64>();
        }
        v
    }

    /// `2 lambda1 x`; only defined for smooth regularizers.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.add_grad(x, 1.0, &mut out)?;
        Ok(out)
    }

    /// `out += scale * grad g(x)`
    pub(crate) fn add_grad(&self, x: &[f64], scale: f64, out: &mut [f64]) -> Result<()> {
        match *self {
            Regularizer::None => Ok(()),
            Regularizer::L2 { lambda1 } => {
                let c = scale * 2.0 * lambda1;
                for (o, &xi) in out.iter_mut().zip(x) {
                    *o += c * xi;
                }
                Ok(())
            }
            _ => Err(Error::WrongCase(
                "regularizer has an l1 part and no gradient; use its proximal operator".into(),
            )),
        }
    }

    /// `argmin_x (1/(2 eta)) ||x - y||^2 + g(x)` in closed form.
    pub fn prox(&self, eta: f64, y: &[f64]) -> Result<Vec<f64>> {
        let mut out = y.to_vec();
        self.prox_in_place(eta, &mut out)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, eta: f64, y: &mut [f64]) -> Result<()> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Parameter(format!("prox step {eta} must be positive")));
        }
        let (l1, l2) = self.weights();
        let tau = eta * l2;
        let shrink = 1.0 + 2.0 * eta * l1;
        for v in y.iter_mut() {
            let mut t = *v;
            if l2 != 0.0 {
                t = soft_threshold(t, tau);
            }
            if l1 != 0.0 {
                t /= shrink;
            }
            *v = t;
        }
        Ok(())
    }
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("{name} = {w} must be finite and >= 0")))
    }
}

/// `sign(y) * max(|y| - tau, 0)`
#[inline]
pub fn soft_threshold(y: f64, tau: f64) -> f64 {
    if y > tau {
        y - tau
    } else if y < -tau {
        y + tau
    } else {
        0.0
    }
}

/// The four problem regimes: smooth or non-smooth components, strongly convex or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemCase {
    SmoothStronglyConvex,
    SmoothNonStronglyConvex,
    NonsmoothStronglyConvex,
    NonsmoothNonStronglyConvex,
}

impl ProblemCase {
    pub fn number(self) -> u8 {
        match self {
            ProblemCase::SmoothStronglyConvex => 1,
            ProblemCase::SmoothNonStronglyConvex => 2,
            ProblemCase::NonsmoothStronglyConvex => 3,
            ProblemCase::NonsmoothNonStronglyConvex => 4,
        }
    }

    pub fn is_smooth(self) -> bool {
        self.number() <= 2
    }

    pub fn is_strongly_convex(self) -> bool {
        self.number() % 2 == 1
    }
}

/// A regularized empirical risk over a shared dataset.
#[derive(Debug, Clone)]
pub struct Objective {
    data: Arc<Dataset>,
    loss: Loss,
    reg: Regularizer,
    smoothness: Option<f64>,
    lipschitz: f64,
    mu: f64,
}

impl Objective {
    pub fn new(data: impl Into<Arc<Dataset>>, loss: Loss, reg: Regularizer) -> Result<Self> {
        let data = data.into();
        let max_sq = data.examples().iter().map(|e| e.squared_norm()).fold(0.0, f64::max);
        let smoothness = loss.curvature().map(|c| c * max_sq);
        if smoothness == Some(0.0) {
            return Err(Error::InvalidData("every example is all-zero; the loss is constant".into()));
        }
        Ok(Objective { data, loss, reg, smoothness, lipschitz: max_sq.sqrt(), mu: reg.strong_convexity() })
    }

    /// Overrides the strong-convexity constant (for losses with extra curvature).
    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu.is_finite()) {
            return Err(Error::Parameter(format!("mu = {mu} must be finite and >= 0")));
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    pub fn shared_dataset(&self) -> Arc<Dataset> {
        Arc::clone(&self.data)
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.reg
    }

    /// Global smoothness constant `L = max_i L_i`; `None` for non-smooth losses.
    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub(crate) fn require_smoothness(&self) -> Result<f64> {
        self.smoothness
            .ok_or_else(|| Error::WrongCase(format!("{:?} loss has no smoothness constant", self.loss)))
    }

    /// Lipschitz constant of the hinge components, `max_i ||a_i||`.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn case(&self) -> ProblemCase {
        match (self.loss.is_smooth(), self.mu > 0.0) {
            (true, true) => ProblemCase::SmoothStronglyConvex,
            (true, false) => ProblemCase::SmoothNonStronglyConvex,
            (false, true) => ProblemCase::NonsmoothStronglyConvex,
            (false, false) => ProblemCase::NonsmoothNonStronglyConvex,
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::Dimension { expected: self.dim(), got: x.len() })
        }
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n() {
            Ok(())
        } else {
            Err(Error::Parameter(format!("example index {i} out of range 0..{}", self.n())))
        }
    }

    /// Scalar multiplying `a_i` in the component (sub)gradient at `x`.
    #[inline]
    pub(crate) fn coefficient(&self, i: usize, x: &[f64]) -> f64 {
        let ex = self.data.example(i);
        self.loss.derivative(ex.dot(x), ex.label())
    }

    /// `f_i(x)`
    pub fn component_value(&self, i: usize, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.check_index(i)?;
        let ex = self.data.example(i);
        Ok(self.loss.value(ex.dot(x), ex.label()))
    }

    /// `f(x) = (1/n) sum_i f_i(x)`, without the regularizer.
    pub fn loss_value(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.loss_value_unchecked(x))
    }

    pub(crate) fn loss_value_unchecked(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.data.examples().iter().map(|e| self.loss.value(e.dot(x), e.label())).sum();
        sum / self.n() as f64
    }

    /// `phi(x) = f(x) + g(x)`
    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.phi_unchecked(x))
    }

    pub(crate) fn phi_unchecked(&self, x: &[f64]) -> f64 {
        self.loss_value_unchecked(x) + self.reg.value(x)
    }

    /// Exact gradient of one smooth component.
    pub fn component_grad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if !self.loss.is_smooth() {
            return Err(Error::WrongCase(format!(
                "{:?} loss is non-smooth; use component_subgrad",
                self.loss
            )));
        }
        self.component_direction(i, x)
    }

    /// Sub-gradient of one hinge component; zero on the inactive side and at the kink.
    pub fn component_subgrad(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        if self.loss.is_smooth() {
            return Err(Error::WrongCase(format!("{:?} loss is smooth; use component_grad", self.loss)));
        }
        self.component_direction(i, x)
    }

    fn component_direction(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        self.check_index(i)?;
        let mut out = vec![0.0; self.dim()];
        self.data.example(i).axpy(self.coefficient(i, x), &mut out);
        Ok(out)
    }

    /// Mean of component gradients, summed in index order.
    pub fn full_grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if !self.loss.is_smooth() {
            return Err(Error::WrongCase("non-smooth loss; use full_subgrad".into()));
        }
        self.check_dim(x)?;
        Ok(self.full_direction(x).0)
    }

    /// Mean of component sub-gradients, summed in index order.
    pub fn full_subgrad(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.loss.is_smooth() {
            return Err(Error::WrongCase("smooth loss; use full_grad".into()));
        }
        self.check_dim(x)?;
        Ok(self.full_direction(x).0)
    }

    /// Mean (sub)gradient and the per-example coefficients it was built from.
    pub(crate) fn full_direction(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut sum = vec![0.0; self.dim()];
        let mut coeffs = Vec::with_capacity(self.n());
        for (i, ex) in self.data.examples().iter().enumerate() {
            let c = self.coefficient(i, x);
            ex.axpy(c, &mut sum);
            coeffs.push(c);
        }
        let n = self.n() as f64;
        for s in &mut sum {
            *s /= n;
        }
        (sum, coeffs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_linear, TaskKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(text: &str) -> Arc<Dataset> {
        Arc::new(Dataset::from_libsvm_str(text, None).unwrap())
    }

    fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|j| {
                let mut p = x.to_vec();
                let mut m = x.to_vec();
                p[j] += h;
                m[j] -= h;
                (f(&p) - f(&m)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn ridge_at_origin() {
        let obj = Objective::new(toy("1 1:1\n"), Loss::Squared, Regularizer::l2(0.5).unwrap()).unwrap();
        assert_eq!(obj.phi(&[0.0]).unwrap(), 1.0);
        let obj = Objective::new(
            Arc::new(Dataset::from_libsvm_str("1 1:1\n", Some(2)).unwrap()),
            Loss::Squared,
            Regularizer::l2(0.5).unwrap(),
        )
        .unwrap();
        assert_eq!(obj.phi(&[0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn logistic_at_origin_is_ln2() {
        let (ds, _) = synth_linear(20, 4, 0.1, 3, TaskKind::Classification).unwrap();
        let obj = Objective::new(ds, Loss::Logistic, Regularizer::None).unwrap();
        let v = obj.phi(&[0.0; 4]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn hinge_phi_matches_direct_summation() {
        let data = toy("1 1:0.6 2:0.8\n-1 1:1\n1 2:-1\n");
        let reg = Regularizer::l2(0.05).unwrap();
        let obj = Objective::new(data, Loss::Hinge, reg).unwrap();
        let x = [0.3, -1.7];
        let rows = [([0.6, 0.8], 1.0), ([1.0, 0.0], -1.0), ([0.0, -1.0], 1.0)];
        let mut total = 0.0;
        for (a, b) in rows {
            let z: f64 = a[0] * x[0] + a[1] * x[1];
            total += f64::max(0.0, 1.0 - b * z);
        }
        let expected = total / 3.0 + 0.05 * (x[0] * x[0] + x[1] * x[1]);
        assert!((obj.phi(&x).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn squared_gradient_at_origin() {
        let data = Arc::new(Dataset::from_libsvm_str("1 1:1\n", Some(2)).unwrap());
        let obj = Objective::new(data, Loss::Squared, Regularizer::None).unwrap();
        assert_eq!(obj.component_grad(0, &[0.0, 0.0]).unwrap(), vec![-2.0, 0.0]);
    }

    #[test]
    fn logistic_gradient_at_origin() {
        let data = toy("-1 1:0.6 2:0.8\n");
        let obj = Objective::new(data, Loss::Logistic, Regularizer::None).unwrap();
        let g = obj.component_grad(0, &[0.0, 0.0]).unwrap();
        assert!((g[0] - 0.3).abs() < 1e-15 && (g[1] - 0.4).abs() < 1e-15);
        let fd = central_diff(|x| obj.component_value(0, x).unwrap(), &[0.0, 0.0], 1e-6);
        assert!((fd[0] - 0.3).abs() < 1e-8 && (fd[1] - 0.4).abs() < 1e-8);
    }

    #[test]
    fn smooth_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for loss in [Loss::Logistic, Loss::Squared] {
            let (ds, _) = synth_linear(5, 3, 0.3, 5, TaskKind::Classification).unwrap();
            let obj = Objective::new(ds, loss, Regularizer::None).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let i = rng.random_range(0..5);
                let g = obj.component_grad(i, &x).unwrap();
                let fd = central_diff(|p| obj.component_value(i, p).unwrap(), &x, 1e-6);
                for (a, b) in g.iter().zip(&fd) {
                    assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{loss:?}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn hinge_subgradient_branches() {
        let data = toy("1 1:1\n");
        let obj = Objective::new(data, Loss::Hinge, Regularizer::None).unwrap();
        assert_eq!(obj.component_subgrad(0, &[0.5]).unwrap(), vec![-1.0]);
        assert_eq!(obj.component_subgrad(0, &[1.5]).unwrap(), vec![0.0]);
        assert_eq!(obj.component_subgrad(0, &[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(obj.component_grad(0, &[0.0]), Err(Error::WrongCase(_))));
        assert!(matches!(obj.full_grad(&[0.0]), Err(Error::WrongCase(_))));
    }

    #[test]
    fn full_gradient_is_mean_of_components() {
        let (ds, _) = synth_linear(30, 4, 0.2, 9, TaskKind::Regression).unwrap();
        let obj = Objective::new(ds, Loss::Squared, Regularizer::None).unwrap();
        let x = [0.1, -0.4, 0.7, 2.0];
        let full = obj.full_grad(&x).unwrap();
        let mut mean = vec![0.0; 4];
        for i in 0..30 {
            for (m, g) in mean.iter_mut().zip(obj.component_grad(i, &x).unwrap()) {
                *m += g / 30.0;
            }
        }
        for (a, b) in full.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
        let single = Objective::new(toy("1 1:0.5 2:2\n"), Loss::Logistic, Regularizer::None).unwrap();
        assert_eq!(single.full_grad(&[0.2, 0.1]).unwrap(), single.component_grad(0, &[0.2, 0.1]).unwrap());
    }

    #[test]
    fn regularizer_gradient() {
        let reg = Regularizer::l2(0.5).unwrap();
        assert_eq!(reg.grad(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
        assert_eq!(Regularizer::None.grad(&[3.0]).unwrap(), vec![0.0]);
        assert!(matches!(Regularizer::l1(0.1).unwrap().grad(&[1.0]), Err(Error::WrongCase(_))));
        let reg = Regularizer::l2(0.37).unwrap();
        let x = [0.3, -1.2, 2.5];
        let fd = central_diff(|p| reg.value(p), &x, 1e-6);
        for (a, b) in reg.grad(&x).unwrap().iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0));
        }
    }

    #[test]
    fn prox_closed_forms() {
        let l1 = Regularizer::l1(1.0).unwrap();
        assert!((l1.prox(0.1, &[0.5]).unwrap()[0] - 0.4).abs() < 1e-15);
        assert_eq!(l1.prox(0.1, &[0.05]).unwrap(), vec![0.0]);
        assert_eq!(l1.prox(0.1, &[-0.05]).unwrap(), vec![0.0]);
        assert_eq!(Regularizer::None.prox(3.0, &[1.5, -2.0]).unwrap(), vec![1.5, -2.0]);
        let l2 = Regularizer::l2(0.5).unwrap();
        assert_eq!(l2.prox(1.0, &[4.0]).unwrap(), vec![2.0]);
        assert!(matches!(l1.prox(0.0, &[1.0]), Err(Error::Parameter(_))));
        assert!(matches!(l1.prox(-1.0, &[1.0]), Err(Error::Parameter(_))));
    }

    #[test]
    fn case_classification() {
        let data = toy("1 1:1\n");
        let case = |loss, reg| Objective::new(Arc::clone(&data), loss, reg).unwrap().case();
        assert_eq!(case(Loss::Logistic, Regularizer::l2(0.1).unwrap()).number(), 1);
        assert_eq!(case(Loss::Squared, Regularizer::l1(0.1).unwrap()).number(), 2);
        assert_eq!(case(Loss::Hinge, Regularizer::elastic_net(0.1, 0.1).unwrap()).number(), 3);
        assert_eq!(case(Loss::Hinge, Regularizer::None).number(), 4);
    }

    #[test]
    fn unit_rows_give_documented_constants() {
        let (ds, _) = synth_linear(10, 3, 0.0, 1, TaskKind::Classification).unwrap();
        let ds = Arc::new(ds);
        let lg = Objective::new(Arc::clone(&ds), Loss::Logistic, Regularizer::None).unwrap();
        let sq = Objective::new(Arc::clone(&ds), Loss::Squared, Regularizer::l2(0.01).unwrap()).unwrap();
        assert!((lg.smoothness().unwrap() - 0.25).abs() < 1e-12);
        assert!((sq.smoothness().unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(sq.mu(), 0.02);
        let hg = Objective::new(ds, Loss::Hinge, Regularizer::None).unwrap();
        assert!(hg.smoothness().is_none());
        assert!((hg.lipschitz() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let obj = Objective::new(toy("1 1:1 2:1\n"), Loss::Squared, Regularizer::None).unwrap();
        assert!(matches!(obj.phi(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn logistic_is_finite_for_extreme_margins() {
        for z in [-1e308, -800.0, 0.0, 800.0, 1e308] {
            assert!(Loss::Logistic.value(z, 1.0).is_finite());
            assert!(Loss::Logistic.derivative(z, 1.0).is_finite());
        }
    }
}
