//! Acceptance suite. Each test is one numbered criterion and prints exactly
//! one pass/fail line through the harness; tolerances are pinned in place.
//! A red line here means the library breaks a contract, not that a tolerance
//! needs loosening.

use clap::Parser;
use qrelax::diagnostics::{self, EigenOpts, RateValue};
use qrelax::generators::{generate, ExampleConfig, Family};
use qrelax::operators::SpsdOperator;
use qrelax::quadratic::QuadProblem;
use qrelax::relaxed::{self, DirectionCache, IterateCache, LineSearchCase};
use qrelax::solvers::{run, Method, RunReport, SolverOptions, StopRule, Termination};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gram-family instance with the family's default ranges.
fn instance(seed: u64, n: usize, m: usize, gamma: f64) -> QuadProblem {
    let mut cfg = ExampleConfig::defaults(Family::Ex1);
    cfg.seed = seed;
    cfg.n = n;
    cfg.m = m;
    cfg.gamma = gamma;
    generate(&cfg).expect("instance generation")
}

/// Same, but with zero-centred factors so the spectrum is well spread rather
/// than dominated by the all-ones direction.
fn spread_instance(seed: u64, n: usize, m: usize, gamma: f64) -> QuadProblem {
    let mut cfg = ExampleConfig::defaults(Family::Ex1);
    cfg.seed = seed;
    cfg.n = n;
    cfg.m = m;
    cfg.gamma = gamma;
    cfg.x_range = (-1.0, 1.0);
    generate(&cfg).expect("instance generation")
}

/// Random point of the open cone {c'x > 0}, with an optional alignment floor
/// (cos of the angle to c) for tests that differentiate near the boundary.
fn cone_point(p: &QuadProblem, rng: &mut ChaCha8Rng, min_cos: f64) -> Vec<f64> {
    let c_norm = dot(p.c(), p.c()).sqrt();
    loop {
        let mut x: Vec<f64> = (0..p.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut ctx = dot(p.c(), &x);
        if ctx == 0.0 {
            continue;
        }
        if ctx < 0.0 {
            for v in &mut x {
                *v = -*v;
            }
            ctx = -ctx;
        }
        if ctx >= min_cos * c_norm * dot(&x, &x).sqrt() {
            return x;
        }
    }
}

/// The seeded (problem, cone point, coordinate) triples shared by the first
/// two criteria: sizes cycle through {4, 16, 64}. Operators are kept full
/// rank: on rank-deficient instances coordinate directions come out nearly
/// collinear with the iterate in the Q-seminorm, and the line restriction is
/// then so flat that no value-comparison search can localise its minimiser
/// to the pinned tolerance in double precision. The grid-dominance check is
/// the meaningful oracle there; singular operators get their exercise in the
/// convexity, Hessian and rate criteria instead.
fn for_each_triple(mut visit: impl FnMut(&QuadProblem, &[f64], usize)) {
    let sizes = [4usize, 16, 64];
    for t in 0..1000u64 {
        let n = sizes[t as usize % sizes.len()];
        let (m, gamma) = if t % 2 == 0 { (n, 0.05) } else { (n + n / 2, 0.3) };
        let p = spread_instance(9_000 + t, n, m, gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(77_000 + t);
        let x = cone_point(&p, &mut rng, 0.0);
        let i = rng.random_range(0..n);
        visit(&p, &x, i);
    }
}

/// Golden-section refinement inside an already-valid bracket.
fn golden_min(phi: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let mut m1 = hi - inv * (hi - lo);
    let mut m2 = lo + inv * (hi - lo);
    let mut f1 = phi(m1);
    let mut f2 = phi(m2);
    for _ in 0..120 {
        if f1 <= f2 {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - inv * (hi - lo);
            f1 = phi(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + inv * (hi - lo);
            f2 = phi(m2);
        }
    }
    0.5 * (lo + hi)
}

/// Least-squares slope of log(objective) over the last 30% of a trace.
fn tail_slope(rep: &RunReport, relaxed_obj: bool) -> f64 {
    let pts: Vec<(f64, f64)> = rep
        .records
        .iter()
        .filter_map(|rec| {
            let obj = if relaxed_obj { rec.r } else { rec.d };
            (obj > 0.0).then(|| (rec.k as f64, obj.ln()))
        })
        .collect();
    let from = pts.len() - (3 * pts.len()).div_ceil(10);
    let tail = &pts[from..];
    assert!(tail.len() >= 2, "trace too short for a tail slope");
    let xm = tail.iter().map(|p| p.0).sum::<f64>() / tail.len() as f64;
    let ym = tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64;
    let num: f64 = tail.iter().map(|p| (p.0 - xm) * (p.1 - ym)).sum();
    let den: f64 = tail.iter().map(|p| (p.0 - xm) * (p.0 - xm)).sum();
    num / den
}

/// Drive the experiment binary's own resolution and execution path.
fn run_cli(args: &[&str]) -> qrelax_cli::driver::Outcome {
    let cli = qrelax_cli::config::Cli::try_parse_from(std::iter::once("qrelax").chain(args.iter().copied()))
        .expect("flag parsing");
    let job = qrelax_cli::config::resolve(cli).expect("config resolution");
    qrelax_cli::driver::execute(&job).expect("driver run")
}

#[test]
fn criterion_01_line_search_matches_golden_section_oracle() {
    let started = Instant::now();
    const GRID: usize = 10_000;
    const WIDTH: f64 = 1e3;
    let spacing = 2.0 * WIDTH / (GRID - 1) as f64;
    let (mut interior, mut monotone, mut collinear) = (0usize, 0usize, 0usize);
    for_each_triple(|p, x, i| {
        let konst = p.const_term();
        let qx = p.op().matvec(x);
        let xc = IterateCache::compute(p, x);
        let vc = DirectionCache::coordinate(p, &qx, i);
        let out = relaxed::line_search_r(konst, xc, vc).expect("x lies in the cone");
        // Closed form of t -> R(x + t e_i) from the scalar caches.
        let phi = |t: f64| {
            let ct = xc.c_dot_x + t * vc.c_dot_v;
            let xq = xc.x_q_x + t * (2.0 * vc.v_q_x + t * vc.v_q_v);
            if ct > 0.0 && xq > 0.0 {
                konst - ct * ct / xq
            } else {
                konst
            }
        };
        match out.case {
            LineSearchCase::InteriorMin { tau } => {
                interior += 1;
                let mut best = (f64::INFINITY, 0usize);
                for j in 0..GRID {
                    let t = tau - WIDTH + j as f64 * spacing;
                    let val = phi(t);
                    assert!(
                        out.new_r <= val,
                        "grid point t={t} undercuts the exact minimum: {val:e} < {:e}",
                        out.new_r
                    );
                    if val < best.0 {
                        best = (val, j);
                    }
                }
                let lo = tau - WIDTH + best.1.saturating_sub(1) as f64 * spacing;
                let hi = tau - WIDTH + (best.1 + 1).min(GRID - 1) as f64 * spacing;
                // Refine with the constant offset dropped and the caches
                // shifted to the bracket centre: same restriction, same
                // minimiser, but the evaluations no longer lose digits to
                // the offset or to cancellation at large |t|, so golden
                // section resolves flat basins down to the pinned tolerance.
                let mid = 0.5 * (lo + hi);
                let ct0 = xc.c_dot_x + mid * vc.c_dot_v;
                let xq0 = xc.x_q_x + mid * (2.0 * vc.v_q_x + mid * vc.v_q_v);
                let vqx0 = vc.v_q_x + mid * vc.v_q_v;
                let psi = |u: f64| {
                    let ct = ct0 + u * vc.c_dot_v;
                    let xq = xq0 + u * (2.0 * vqx0 + u * vc.v_q_v);
                    if ct > 0.0 && xq > 0.0 {
                        -(ct * ct) / xq
                    } else {
                        0.0
                    }
                };
                let t_gs = mid + golden_min(&psi, lo - mid, hi - mid);
                assert!(
                    (t_gs - tau).abs() <= 1e-6 * (1.0 + tau.abs()),
                    "golden section found {t_gs} but the closed form gave {tau}"
                );
            }
            LineSearchCase::Monotone { toward_positive } => {
                monotone += 1;
                for j in 0..GRID {
                    let t = -WIDTH + j as f64 * spacing;
                    assert!(out.new_r <= phi(t), "grid value below the monotone infimum");
                }
                let (near, far) = if toward_positive { (-WIDTH, WIDTH) } else { (WIDTH, -WIDTH) };
                assert!(phi(far) <= phi(near), "restriction is not monotone toward the infimum");
            }
            LineSearchCase::Collinear => {
                collinear += 1;
                let here = konst - xc.c_dot_x * xc.c_dot_x / xc.x_q_x;
                assert_eq!(out.new_r, here, "collinear outcome must report R at the iterate");
            }
        }
    });
    assert!(
        interior >= 667,
        "interior case must dominate the sample: interior={interior} monotone={monotone} collinear={collinear}"
    );
    assert!(started.elapsed().as_secs() < 60, "criterion 1 exceeded its runtime budget");
}

#[test]
fn criterion_02_improvement_identities_hold() {
    for_each_triple(|p, x, i| {
        let konst = p.const_term();
        let qx = p.op().matvec(x);
        let xc = IterateCache::compute(p, x);
        let vc = DirectionCache::coordinate(p, &qx, i);
        let out = relaxed::line_search_r(konst, xc, vc).unwrap();
        let i_r = relaxed::improvement_r(xc, vc);
        let rx = relaxed::rescale_and_eval(konst, xc).unwrap().value;
        if let LineSearchCase::InteriorMin { tau } = out.case {
            let mut z = x.to_vec();
            z[i] += tau;
            let rz = relaxed::eval_r(p, &z).unwrap().value;
            assert!(
                (i_r - (rx - rz)).abs() <= 1e-10 * (1.0 + rx),
                "improvement {i_r:e} vs realised decrease {:e}",
                rx - rz
            );
        }
        if matches!(out.case, LineSearchCase::Collinear) {
            assert_eq!(i_r, 0.0);
            assert_eq!(relaxed::acceleration(xc, vc), f64::INFINITY);
        } else {
            let acc = relaxed::acceleration(xc, vc);
            let s = xc.scale();
            let y: Vec<f64> = x.iter().map(|v| v * s).collect();
            let mut e = vec![0.0; p.n()];
            e[i] = 1.0;
            let product = p.improvement_d(&y, &e) * acc;
            assert!(
                (i_r - product).abs() <= 1e-10 * (1.0 + i_r),
                "I_R {i_r:e} vs I_D(s x)*A {product:e}"
            );
        }
    });
}

#[test]
fn criterion_03_traces_meet_the_contraction_bound() {
    let started = Instant::now();
    for seed in 0..100u64 {
        let gamma = 0.3 + 0.2 * (seed % 4) as f64;
        let p = instance(30_000 + seed, 32, 48, gamma);
        let iota = diagnostics::iota(&p, &EigenOpts::default()).unwrap();
        assert!(iota > 0.0 && iota < 1.0);
        let konst = p.const_term();
        for method in [Method::CdD, Method::HR, Method::BiR] {
            let rep = run(&p, method, &StopRule::budget(1280), &SolverOptions::default()).unwrap();
            let mut bound = konst * (1.0 + 1e-8);
            for (row, rec) in rep.records.iter().enumerate() {
                assert_eq!(rec.k, row as u64, "{method} trace is not dense in k");
                let obj = if method.is_relaxed() { rec.r } else { rec.d };
                assert!(
                    obj <= bound,
                    "{method} seed {seed} k={}: {obj:e} above (1-iota)^k bound {bound:e}",
                    rec.k
                );
                bound *= 1.0 - iota;
            }
        }
    }
    assert!(started.elapsed().as_secs() < 120, "criterion 3 exceeded its runtime budget");
}

#[test]
fn criterion_04_relaxed_methods_accelerate_asymptotically() {
    // Scan the seed space for instances whose measured lower acceleration
    // factor reaches 2; the positively correlated factor family makes these
    // common but not universal.
    let mut picked = Vec::new();
    for seed in 0..400u64 {
        let p = instance(seed, 100, 50, 0.0);
        if let (RateValue::Finite(a), _) = diagnostics::a_infinity(&p) {
            if a >= 2.0 {
                picked.push((seed, p));
            }
        }
        if picked.len() == 20 {
            break;
        }
    }
    assert_eq!(picked.len(), 20, "not enough instances with a_inf >= 2 in the scanned range");
    for (seed, p) in &picked {
        let constants = diagnostics::rate_constants(p, &EigenOpts::default()).unwrap();
        let stop = StopRule {
            max_column_calls: Some(20_000),
            objective_tolerance: Some(1e-10 * p.const_term()),
            target: None,
        };
        let hr = run(p, Method::HR, &stop, &SolverOptions::default()).unwrap();
        let cd = run(p, Method::CdD, &stop, &SolverOptions::default()).unwrap();
        let check = diagnostics::asymptotic_rate_check(&hr, &constants, 0.1).unwrap();
        assert!(
            check.k_epsilon.is_some(),
            "seed {seed}: no k_eps within the budget ({} violations over {} steps)",
            check.violations,
            check.steps
        );
        let slope_hr = tail_slope(&hr, true);
        let slope_cd = tail_slope(&cd, false);
        assert!(
            slope_hr < slope_cd,
            "seed {seed}: tail slope of the relaxed method {slope_hr:e} is not below {slope_cd:e}"
        );
    }
}

#[test]
fn criterion_05_generalised_convexity_sampling() {
    let mut quasi = 0usize;
    let mut hypothesis_fired = 0usize;
    for block in 0..200u64 {
        let (m, gamma) = if block % 2 == 0 { (12, 0.4) } else { (5, 0.0) };
        let p = spread_instance(40_000 + block, 8, m, gamma);
        let konst = p.const_term();
        let slack = 1e-10 * (1.0 + konst);
        let mut rng = ChaCha8Rng::seed_from_u64(50_000 + block);
        for _ in 0..50 {
            // Quasiconvexity holds on the whole space, no cone restriction.
            let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambda: f64 = rng.random_range(0.0..1.0);
            let mid: Vec<f64> =
                x.iter().zip(&u).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let rx = relaxed::eval_r(&p, &x).unwrap().value;
            let ru = relaxed::eval_r(&p, &u).unwrap().value;
            let rm = relaxed::eval_r(&p, &mid).unwrap().value;
            assert!(rm <= rx.max(ru) + slack, "sublevel set not convex: {rm:e} > max({rx:e}, {ru:e})");
            quasi += 1;

            // Pseudoconvexity on the cone.
            let a = cone_point(&p, &mut rng, 0.0);
            let b = cone_point(&p, &mut rng, 0.0);
            let g = relaxed::grad_r(&p, &a).unwrap();
            let dir: f64 = g.iter().zip(b.iter().zip(&a)).map(|(gi, (bi, ai))| gi * (bi - ai)).sum();
            if dir >= 0.0 {
                hypothesis_fired += 1;
                let ra = relaxed::eval_r(&p, &a).unwrap().value;
                let rb = relaxed::eval_r(&p, &b).unwrap().value;
                assert!(ra <= rb + slack, "ascent direction yet R(a) {ra:e} > R(b) {rb:e}");
            }
        }
    }
    assert_eq!(quasi, 10_000);
    assert!(hypothesis_fired >= 1_000, "gradient hypothesis fired on only {hypothesis_fired} pairs");
}

#[test]
fn criterion_06_hessian_has_at_most_one_negative_eigenvalue() {
    let mut checked = 0usize;
    for block in 0..20u64 {
        let (m, gamma) = if block % 2 == 0 { (12, 0.5) } else { (6, 0.0) };
        let p = spread_instance(60_000 + block, 8, m, gamma);
        let n = p.n();
        let mut rng = ChaCha8Rng::seed_from_u64(61_000 + block);
        for _ in 0..25 {
            // Keep a margin to the cone boundary so the centred differences
            // below stay on the smooth branch.
            let x = cone_point(&p, &mut rng, 0.05);
            let h = relaxed::hessian_r(&p, &x, 2 << 30).unwrap();
            let eigs = h.clone().symmetric_eigen().eigenvalues;
            let norm = eigs.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
            let negatives = eigs.iter().filter(|&&v| v < -1e-8 * norm).count();
            assert!(negatives <= 1, "{negatives} eigenvalues below -1e-8*|H| at block {block}");

            let mut err_sq = 0.0;
            let mut ref_sq = 0.0;
            for j in 0..n {
                let step = 1e-5 * (1.0 + x[j].abs());
                let mut xp = x.clone();
                xp[j] += step;
                let mut xm = x.clone();
                xm[j] -= step;
                let gp = relaxed::grad_r(&p, &xp).unwrap();
                let gm = relaxed::grad_r(&p, &xm).unwrap();
                for i in 0..n {
                    let fd = (gp[i] - gm[i]) / (2.0 * step);
                    err_sq += (fd - h[(i, j)]) * (fd - h[(i, j)]);
                    ref_sq += h[(i, j)] * h[(i, j)];
                }
            }
            assert!(
                err_sq.sqrt() <= 1e-5 * ref_sq.sqrt(),
                "finite differences disagree: rel err {:e}",
                err_sq.sqrt() / ref_sq.sqrt()
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 500);
}

#[test]
fn criterion_07_rate_constants_ordered_and_exact_on_the_worked_instance() {
    for seed in 0..100u64 {
        let (m, gamma) = match seed % 3 {
            0 => (48, 0.5),
            1 => (16, 0.0),
            _ => (32, 1.5),
        };
        let p = instance(70_000 + seed, 32, m, gamma);
        let rc = diagnostics::rate_constants(&p, &EigenOpts::default()).unwrap();
        assert!(
            rc.iota_tilde >= rc.iota,
            "seed {seed}: iota_tilde {:e} < iota {:e}",
            rc.iota_tilde,
            rc.iota
        );
    }
    // Two-coordinate instance worked by hand; every value is exact in f64.
    let op = SpsdOperator::from_triplets(2, &[(0, 0, 1.0), (1, 1, 2.0)]).unwrap();
    let p = QuadProblem::with_solution(op, vec![1.0, 1.0], vec![1.0, 0.5]).unwrap();
    let rc = diagnostics::rate_constants(&p, &EigenOpts::default()).unwrap();
    assert_eq!(rc.iota, 0.25);
    assert_eq!(rc.iota_tilde, 0.5);
    assert_eq!(rc.a_inf, RateValue::Finite(1.5));
    assert_eq!(rc.a_inf_up, RateValue::Finite(3.0));
}

#[test]
fn criterion_08_simple_rescaling_tracks_the_unit_scale() {
    for seed in 0..20u64 {
        let p = instance(80_000 + seed, 32, 48, 1.0);
        let iota = diagnostics::iota(&p, &EigenOpts::default()).unwrap();
        let konst = p.const_term();
        let stop = StopRule {
            max_column_calls: Some(200_000),
            objective_tolerance: Some(1e-10 * konst),
            target: None,
        };
        let rep = run(&p, Method::SrD, &stop, &SolverOptions::default()).unwrap();
        assert_eq!(rep.termination, Termination::Converged, "seed {seed}");
        let mut prev = f64::INFINITY;
        let mut bound = konst * (1.0 + 1e-8);
        for rec in &rep.records {
            assert!(rec.d <= prev, "seed {seed}: trace not monotone at k={}", rec.k);
            prev = rec.d;
            assert!(rec.d <= bound, "seed {seed} k={}: above the per-step bound", rec.k);
            bound *= 1.0 - iota;
        }
        let last_k = rep.records.last().unwrap().k;
        let decile_from = last_k - last_k / 10;
        let mut sampled = 0usize;
        for rec in rep.records.iter().filter(|r| r.k >= decile_from.max(1)) {
            assert!(
                (rec.s - 1.0).abs() < 1e-3,
                "seed {seed} k={}: rescale factor {} drifted from 1",
                rec.k,
                rec.s
            );
            sampled += 1;
        }
        assert!(sampled >= 1);
    }
}

#[test]
fn criterion_09_power_network_pipeline_end_to_end() {
    let started = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bus");
    let matrix = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/1138_bus.mtx");
    let budget = 2_000u64 * 1_138;
    let budget_str = budget.to_string();
    let outcome = run_cli(&[
        "--example", "ex6",
        "--matrix", matrix,
        "--seed", "7",
        "--budget-calls", &budget_str,
        "--tol", "1e-6",
        "--out", out.to_str().unwrap(),
    ]);
    let meta: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&outcome.manifest_path).unwrap()).unwrap();
    assert_eq!(meta["n"], 1_138, "network order read from the matrix file");
    let a_inf = meta["rate_constants"]["a_inf"].as_f64().expect("finite a_inf");
    assert!(a_inf < 1.2, "measured a_inf = {a_inf}");
    let runs = meta["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 5);
    for r in runs {
        // --tol is relative to D at the origin, so convergence is exactly the
        // "objective below 1e-6 * D(0)" condition.
        assert_eq!(r["termination"], "converged", "{} missed the tolerance", r["method"]);
        assert!(r["column_calls"].as_u64().unwrap() <= budget);
    }
    assert!(started.elapsed().as_secs() < 300, "criterion 9 exceeded its runtime budget");
}

#[test]
fn criterion_10_exact_accounting_and_byte_identical_reruns() {
    for seed in 0..10u64 {
        let p = instance(90_000 + seed, 24, 30, 0.4);
        for method in Method::ALL {
            let rep = run(&p, method, &StopRule::budget(720), &SolverOptions::default()).unwrap();
            for rec in &rep.records {
                let expected = if method == Method::Cg { rec.k * 24 } else { rec.k };
                assert_eq!(
                    rec.column_calls, expected,
                    "{method} row k={} books the wrong call count",
                    rec.k
                );
            }
            assert_eq!(rep.column_calls, rep.records.last().unwrap().column_calls);
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("dist.conf");
    std::fs::write(&conf, "example = ex1\nn = 32\nm = 16\nseed = 5\nreplicates = 300\n").unwrap();
    let one = tmp.path().join("one");
    let two = tmp.path().join("two");
    run_cli(&["--config", conf.to_str().unwrap(), "--out", one.to_str().unwrap()]);
    run_cli(&["--config", conf.to_str().unwrap(), "--out", two.to_str().unwrap()]);
    for name in ["ex1_dist.csv", "meta.json"] {
        let a = std::fs::read(one.join(name)).unwrap();
        let b = std::fs::read(two.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical reruns");
    }
}
