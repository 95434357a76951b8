use proptest::collection::vec;
use proptest::prelude::*;

use fsvrg::dataset::{synth_linear, Dataset, SparseExample, TaskKind};
use fsvrg::diagnostics::{check_variance_bound, lower_median, median};
use fsvrg::harness::io::{trace_from_csv, trace_to_csv};
use fsvrg::objective::soft_threshold;
use fsvrg::schedule::{epoch_sizes, rho_b, theta_nsc_init, theta_nsc_next, theta_sc_optimal};
use fsvrg::solver::{epoch_rng, sample_batch, vr_gradient, Snapshot};
use fsvrg::{run, Algorithm, Loss, Objective, Regularizer, SolverConfig, TraceRecord};

fn small_problem(n: usize, d: usize, seed: u64, loss: Loss) -> Objective {
    let kind = if loss == Loss::Squared { TaskKind::Regression } else { TaskKind::Classification };
    let (ds, _) = synth_linear(n, d, 0.3, seed, kind).unwrap();
    Objective::new(ds, loss, Regularizer::l2(1e-3).unwrap()).unwrap()
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_threshold_solves_scalar_problem(y in -10.0..10.0f64, tau in 0.0..5.0f64) {
        let p = soft_threshold(y, tau);
        // 0 in p - y + tau * sign(p)
        if p == 0.0 {
            prop_assert!(y.abs() <= tau);
        } else {
            prop_assert!((p - y + tau * p.signum()).abs() < 1e-12);
        }
    }

    #[test]
    fn prox_is_nonexpansive(
        u in vec(-5.0..5.0f64, 6),
        v in vec(-5.0..5.0f64, 6),
        l1 in 0.0..2.0f64,
        l2 in 0.0..2.0f64,
        eta in 0.01..2.0f64,
    ) {
        let reg = Regularizer::elastic_net(l1, l2).unwrap();
        let pu = reg.prox(eta, &u).unwrap();
        let pv = reg.prox(eta, &v).unwrap();
        prop_assert!(norm_diff(&pu, &pv) <= norm_diff(&u, &v) + 1e-12);
    }

    #[test]
    fn prox_minimizes_its_objective(
        y in vec(-3.0..3.0f64, 4),
        probe in vec(-3.0..3.0f64, 4),
        l1 in 0.0..1.0f64,
        l2 in 0.0..1.0f64,
        eta in 0.05..1.0f64,
    ) {
        let reg = Regularizer::elastic_net(l1, l2).unwrap();
        let p = reg.prox(eta, &y).unwrap();
        let h = |x: &[f64]| norm_diff(x, &y).powi(2) / (2.0 * eta) + reg.value(x);
        prop_assert!(h(&p) <= h(&probe) + 1e-12);
    }

    #[test]
    fn nsc_weights_satisfy_recursion(theta1 in 0.01..=1.0f64, steps in 1usize..60) {
        let mut t = theta1;
        for _ in 0..steps {
            let next = theta_nsc_next(t).unwrap();
            prop_assert!(next > 0.0 && next < t);
            let lhs = (1.0 - next) / (next * next);
            let rhs = 1.0 / (t * t);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
            t = next;
        }
    }

    #[test]
    fn nsc_init_positive_below_threshold(l in 0.1..10.0f64, frac in 0.01..0.99f64, rho in 0.0..=1.0f64) {
        let eta = frac / ((1.0 + rho) * l);
        let t = theta_nsc_init(l, eta, rho).unwrap();
        prop_assert!(t > 0.0 && t <= 1.0);
    }

    #[test]
    fn sc_weight_is_clamped(mu in 1e-6..1.0f64, eta in 1e-4..1.0f64, m in 1usize..10_000) {
        let t = theta_sc_optimal(mu, eta, m).unwrap();
        prop_assert!(t > 0.0 && t <= 1.0);
    }

    #[test]
    fn epoch_sizes_grow_geometrically(m1 in 1usize..500, rho in 1.0..3.0f64, epochs in 1usize..15) {
        let sizes = epoch_sizes(m1, rho, epochs).unwrap();
        prop_assert_eq!(sizes.len(), epochs);
        prop_assert_eq!(sizes[0], m1);
        for w in sizes.windows(2) {
            prop_assert!(w[1] >= w[0]);
            prop_assert!(w[1] as f64 <= rho * w[0] as f64 + 1.0);
        }
    }

    #[test]
    fn rho_b_lies_in_unit_interval(n in 1usize..1000, frac in 0.0..=1.0f64) {
        let b = ((frac * n as f64).round() as usize).clamp(1, n);
        let r = rho_b(n, b).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        if b == n {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn batches_are_valid(seed in any::<u64>(), epoch in 1usize..50, n in 1usize..200, frac in 0.0..=1.0f64) {
        let b = ((frac * n as f64).round() as usize).clamp(1, n);
        let mut out = Vec::new();
        sample_batch(&mut epoch_rng(seed, epoch), n, b, &mut out);
        prop_assert_eq!(out.len(), b);
        prop_assert!(out.iter().all(|&i| i < n));
        if b > 1 {
            prop_assert!(out.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn estimator_averages_to_full_gradient(
        seed in 0u64..1000,
        x in vec(-2.0..2.0f64, 5),
        s in vec(-2.0..2.0f64, 5),
    ) {
        let obj = small_problem(30, 5, seed, Loss::Logistic);
        let snap = Snapshot::new(&obj, s).unwrap();
        let mut mean = vec![0.0; 5];
        for i in 0..obj.n() {
            let g = vr_gradient(&obj, &snap, &x, &[i]).unwrap();
            for (m, v) in mean.iter_mut().zip(g) {
                *m += v / obj.n() as f64;
            }
        }
        let full = obj.full_grad(&x).unwrap();
        prop_assert!(norm_diff(&mean, &full) < 1e-12);
    }

    #[test]
    fn variance_bound_holds(
        seed in 0u64..1000,
        squared in any::<bool>(),
        b in 1usize..=25,
        x in vec(-3.0..3.0f64, 4),
        s in vec(-3.0..3.0f64, 4),
    ) {
        let loss = if squared { Loss::Squared } else { Loss::Logistic };
        let obj = small_problem(25, 4, seed, loss);
        let check = check_variance_bound(&obj, &x, &s, b, 1e-10).unwrap();
        prop_assert!(check.holds, "lhs {} rhs {}", check.lhs, check.rhs);
    }

    #[test]
    fn trace_csv_round_trips(rows in vec((0.0..1e6f64, any::<f64>(), any::<f64>()), 1..20)) {
        let trace: Vec<TraceRecord> = rows
            .iter()
            .enumerate()
            .map(|(k, &(passes, t, obj))| TraceRecord {
                epoch: k,
                effective_passes: passes,
                wall_time_s: t.abs(),
                objective: if obj.is_nan() { 0.0 } else { obj },
                gap: None,
            })
            .collect();
        let back = trace_from_csv(&trace_to_csv(&trace).unwrap()).unwrap();
        prop_assert_eq!(back, trace);
    }

    #[test]
    fn libsvm_round_trips(rows in vec((any::<bool>(), vec((0usize..30, -1e3..1e3f64), 0..6)), 1..15)) {
        let examples: Vec<SparseExample> = rows
            .iter()
            .map(|(pos, feats)| {
                let mut feats = feats.clone();
                feats.sort_by_key(|f| f.0);
                feats.dedup_by_key(|f| f.0);
                feats.retain(|f| f.1 != 0.0);
                let (idx, val): (Vec<usize>, Vec<f64>) = feats.into_iter().unzip();
                SparseExample::new(idx, val, if *pos { 1.0 } else { -1.0 }).unwrap()
            })
            .collect();
        let ds = Dataset::new(examples, 30).unwrap();
        let back = Dataset::from_libsvm_str(&ds.to_libsvm(), Some(30)).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn medians_bracket_values(values in vec(-1e6..1e6f64, 1..40)) {
        let lo = lower_median(&values);
        let mid = median(&values);
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= lo && lo <= mid && mid <= max);
        prop_assert!(values.contains(&lo));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_deterministic_and_passes_increase(
        seed in any::<u64>(),
        data_seed in 0u64..100,
        alg_idx in 0usize..Algorithm::ALL.len(),
    ) {
        let alg = Algorithm::ALL[alg_idx];
        let loss = if alg.is_subgradient_method() { Loss::Hinge } else { Loss::Logistic };
        let obj = small_problem(40, 4, data_seed, loss);
        let eta = if alg.is_subgradient_method() { Some(0.1) } else { None };
        let mut cfg = SolverConfig::defaults(alg, &obj, eta).unwrap();
        cfg.epochs = 4;
        cfg.seed = seed;
        let a = run(&obj, &cfg).unwrap();
        let b = run(&obj, &cfg).unwrap();
        prop_assert_eq!(a.trace.len(), 5);
        prop_assert_eq!(&a.x, &b.x);
        for (ra, rb) in a.trace.iter().zip(&b.trace) {
            prop_assert_eq!(ra.objective.to_bits(), rb.objective.to_bits());
            prop_assert_eq!(ra.effective_passes, rb.effective_passes);
        }
        prop_assert!(a.trace.windows(2).all(|w| w[1].effective_passes > w[0].effective_passes));
        prop_assert_eq!(a.trace[0].effective_passes, 0.0);
    }
}

#[test]
fn batch_stream_depends_on_epoch() {
    let mut a = Vec::new();
    let mut b = Vec::new();
    sample_batch(&mut epoch_rng(5, 1), 1000, 10, &mut a);
    sample_batch(&mut epoch_rng(5, 2), 1000, 10, &mut b);
    assert_ne!(a, b);
}
