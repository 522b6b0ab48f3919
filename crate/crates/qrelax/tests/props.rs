//! Property tests for the invariants the solvers rely on: bounds and scale
//! invariance of the relaxed objective, exactness of the line searches,
//! improvement/acceleration identities, trace monotonicity and call
//! accounting, and lossless matrix I/O.

use proptest::prelude::*;
use qrelax::diagnostics::{a_infinity, iota, iota_tilde, EigenOpts, RateValue};
use qrelax::operators::SpsdOperator;
use qrelax::quadratic::QuadProblem;
use qrelax::relaxed::{
    self, acceleration, improvement_r, line_search_r, DirectionCache, IterateCache,
    LineSearchCase,
};
use qrelax::solvers::{run, Method, SolverOptions, StopRule, Termination};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Q = XX' + gamma I (SPD), c = Q alpha.
fn build(n: usize, xs: &[f64], gamma: f64, alpha: &[f64]) -> QuadProblem {
    let op = SpsdOperator::gram_plus(n, n, xs.to_vec(), gamma, 0.0).unwrap();
    let c = op.matvec(alpha);
    QuadProblem::with_solution(op, c, alpha.to_vec()).unwrap()
}

/// (n, factor entries, ridge, alpha, probe x, direction v)
fn parts() -> impl Strategy<Value = (usize, Vec<f64>, f64, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=6)
        .prop_flat_map(|n| {
            (
                Just(n),
                prop::collection::vec(-2.0..2.0f64, n * n),
                0.3..2.0f64,
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(-3.0..3.0f64, n),
                prop::collection::vec(-3.0..3.0f64, n),
            )
        })
        .prop_filter("alpha away from zero", |(_, _, _, a, _, _)| {
            a.iter().any(|v| v.abs() > 0.1)
        })
}

fn eval_r_value(p: &QuadProblem, x: &[f64]) -> f64 {
    relaxed::eval_r(p, x).unwrap().value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn relaxed_objective_is_bounded_and_dominated((n, xs, gamma, alpha, x, _v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        let cst = p.const_term();
        let slack = 1e-9 * (1.0 + cst);
        let r = eval_r_value(&p, &x);
        prop_assert!(r >= -slack);
        prop_assert!(r <= cst + slack);
        prop_assert!(r <= p.eval_d(&x) + slack);
        // Off the cone the relaxation pins to the constant exactly.
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        if dot(p.c(), &neg) <= 0.0 {
            prop_assert_eq!(eval_r_value(&p, &neg), cst);
        }
    }

    #[test]
    fn relaxed_objective_ignores_rescaling(
        (n, xs, gamma, alpha, x, _v) in parts(),
        lambda in 0.01..100.0f64,
    ) {
        let p = build(n, &xs, gamma, &alpha);
        prop_assume!(dot(p.c(), &x) > 1e-6);
        let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
        let a = eval_r_value(&p, &x);
        let b = eval_r_value(&p, &scaled);
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + p.const_term()));
    }

    #[test]
    fn line_search_beats_every_grid_point((n, xs, gamma, alpha, x, v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        prop_assume!(dot(p.c(), &x) > 1e-6);
        let xc = IterateCache::compute(&p, &x);
        let qx = p.op().matvec(&x);
        let vc = DirectionCache::general(&p, &qx, &v);
        let out = line_search_r(p.const_term(), xc, vc).unwrap();
        let slack = 1e-7 * (1.0 + p.const_term());
        let at = |t: f64| {
            let y: Vec<f64> = x.iter().zip(&v).map(|(xi, vi)| xi + t * vi).collect();
            eval_r_value(&p, &y)
        };
        match out.case {
            LineSearchCase::InteriorMin { tau } => {
                prop_assert!((out.new_r - at(tau)).abs() <= slack);
                let span = 2.0 * tau.abs() + 1.0;
                for k in 0..=40 {
                    let t = tau - span + 2.0 * span * (k as f64) / 40.0;
                    prop_assert!(out.new_r <= at(t) + slack, "beaten at t = {t}");
                }
            }
            LineSearchCase::Monotone { toward_positive } => {
                let dir = if toward_positive { 1.0 } else { -1.0 };
                let mut prev = at(0.0);
                for t in [1.0, 10.0, 100.0, 1000.0] {
                    let val = at(dir * t);
                    prop_assert!(val <= prev + slack, "not decreasing at t = {t}");
                    prop_assert!(out.new_r <= val + slack, "below the infimum at t = {t}");
                    prev = val;
                }
            }
            LineSearchCase::Collinear => {
                prop_assert!((out.new_r - at(0.0)).abs() <= slack);
            }
        }
    }

    #[test]
    fn improvement_matches_the_interior_line_search((n, xs, gamma, alpha, x, v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        prop_assume!(dot(p.c(), &x) > 1e-6);
        let xc = IterateCache::compute(&p, &x);
        let qx = p.op().matvec(&x);
        let vc = DirectionCache::general(&p, &qx, &v);
        let out = line_search_r(p.const_term(), xc, vc).unwrap();
        if let LineSearchCase::InteriorMin { .. } = out.case {
            let drop = eval_r_value(&p, &x) - out.new_r;
            let imp = improvement_r(xc, vc);
            prop_assert!((drop - imp).abs() <= 1e-7 * (1.0 + p.const_term()));
        }
    }

    #[test]
    fn acceleration_ties_the_two_improvements((n, xs, gamma, alpha, x, v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        prop_assume!(dot(p.c(), &x) > 1e-6);
        let xc = IterateCache::compute(&p, &x);
        let qx = p.op().matvec(&x);
        let vc = DirectionCache::general(&p, &qx, &v);
        let acc = acceleration(xc, vc);
        prop_assume!(acc.is_finite());
        let s = xc.scale();
        let sx: Vec<f64> = x.iter().map(|xi| s * xi).collect();
        let lhs = improvement_r(xc, vc);
        let rhs = acc * p.improvement_d(&sx, &v);
        prop_assert!((lhs - rhs).abs() <= 1e-7 * (1.0 + lhs.abs()));
    }

    #[test]
    fn objective_gap_is_the_radial_improvement((n, xs, gamma, alpha, x, _v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        prop_assume!(dot(p.c(), &x) > 1e-6);
        let gap = p.eval_d(&x) - eval_r_value(&p, &x);
        let radial = p.improvement_d(&x, &x);
        prop_assert!((gap - radial).abs() <= 1e-7 * (1.0 + gap.abs()));
    }

    #[test]
    fn rate_constants_are_ordered((n, xs, gamma, alpha, _x, _v) in parts()) {
        let p = build(n, &xs, gamma, &alpha);
        let opts = EigenOpts::default();
        let i = iota(&p, &opts).unwrap();
        let it = iota_tilde(&p, &opts).unwrap();
        prop_assert!(i > 0.0);
        prop_assert!(it >= i - 1e-12);
        let (a, up) = a_infinity(&p);
        match (a, up) {
            (RateValue::Finite(lo), RateValue::Finite(hi)) => {
                prop_assert!(lo >= 1.0 - 1e-12);
                prop_assert!(hi >= lo - 1e-12);
            }
            (RateValue::Infinite, other) => prop_assert_eq!(other, RateValue::Infinite),
            _ => {}
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn traces_are_monotone_with_exact_accounting(
        (n, xs, gamma, alpha, _x, _v) in parts(),
        mi in 0usize..5,
    ) {
        let p = build(n, &xs, gamma, &alpha);
        let method = Method::ALL[mi];
        let stop = StopRule::budget(40 * n as u64);
        let report = run(&p, method, &stop, &SolverOptions::default()).unwrap();
        prop_assert!(!report.records.is_empty());
        let mut prev_d = f64::INFINITY;
        let mut prev_r = f64::INFINITY;
        for rec in &report.records {
            // The recorded objective column is non-increasing, exactly.
            if method.is_relaxed() {
                prop_assert!(rec.r <= prev_r, "R increased at k = {}", rec.k);
            } else {
                prop_assert!(rec.d <= prev_d, "D increased at k = {}", rec.k);
            }
            prev_d = rec.d;
            prev_r = rec.r;
            let expected = if method == Method::Cg { rec.k * n as u64 } else { rec.k };
            prop_assert_eq!(rec.column_calls, expected);
            if method == Method::SrD && rec.k >= 1 {
                // After rescaling the objectives coincide; the trace computes
                // them through independent formulas, so allow rounding.
                prop_assert!((rec.d - rec.r).abs() <= 1e-12 * (1.0 + p.const_term()));
            }
        }
        let last = report.records.last().unwrap();
        prop_assert_eq!(report.column_calls, last.column_calls);
        prop_assert!(report.column_calls <= 40 * n as u64);
        if report.termination == Termination::BudgetExhausted && method != Method::Cg {
            prop_assert!(report.column_calls + 1 > 40 * n as u64);
        }
    }

    #[test]
    fn matrix_io_round_trips_bitwise((n, xs, gamma, _a, _x, _v) in parts()) {
        let op = SpsdOperator::gram_plus(n, n, xs, gamma, 0.0).unwrap();
        let mut buf = Vec::new();
        qrelax::mmio::write_operator(&mut buf, &op).unwrap();
        let back = qrelax::mmio::read_operator(buf.as_slice()).unwrap();
        prop_assert_eq!(back.order(), n);
        for j in 0..n {
            prop_assert_eq!(op.column(j), back.column(j));
        }
    }
}

/// All five methods drive their objective to a 1e-8 relative tolerance on a
/// moderate SPD instance and report convergence.
#[test]
fn every_method_converges_on_a_well_conditioned_instance() {
    let mut cfg = qrelax::generators::ExampleConfig::defaults(qrelax::generators::Family::Ex1);
    cfg.n = 32;
    cfg.m = 16;
    cfg.seed = 11;
    cfg.gamma = 1.0;
    let p = qrelax::generators::generate(&cfg).unwrap();
    let d0 = p.const_term();
    let stop = StopRule {
        max_column_calls: Some(200_000),
        objective_tolerance: Some(1e-8 * d0),
        target: None,
    };
    for method in Method::ALL {
        let report = run(&p, method, &stop, &SolverOptions::default()).unwrap();
        assert_eq!(report.termination, Termination::Converged, "{method} did not converge");
        let last = report.records.last().unwrap();
        let obj = if method.is_relaxed() { last.r } else { last.d };
        assert!(obj <= 1e-8 * d0, "{method}: final objective {obj} vs scale {d0}");
    }
}
