//! Convergence-rate constants and trace diagnostics.
//!
//! The per-step contraction bound uses iota = lambda_min^+(Q) / (N max_i Q_ii)
//! and its sharper diagonally-weighted variant
//! iota~ = 1 / (N lambda_max(W^{1/2} Q^+ W^{1/2})), W = diag(Q).
//! The asymptotic acceleration interval [a_inf, a_inf_up] is read off the
//! diagonal and the constant term alone.

use crate::error::{Error, Result};
use crate::operators::{dot, SpsdOperator};
use crate::quadratic::QuadProblem;
use crate::solvers::{Method, RunReport};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct EigenOpts {
    /// Orders up to this bound use dense symmetric eigendecomposition.
    pub dense_limit: usize,
    /// Eigenvalues below `null_rel_tol * lambda_max` count as zero.
    pub null_rel_tol: f64,
    /// Relative tolerance for the iterative (Lanczos) fallback.
    pub iter_rel_tol: f64,
    /// Krylov dimension cap for the fallback.
    pub max_lanczos: usize,
    /// Byte budget for dense materialisation.
    pub dense_budget: u64,
}

impl Default for EigenOpts {
    fn default() -> Self {
        EigenOpts {
            dense_limit: 2048,
            null_rel_tol: 1e-10,
            iter_rel_tol: 1e-8,
            max_lanczos: 400,
            dense_budget: 2 << 30,
        }
    }
}

/// Diagonal-derived acceleration factors can be unbounded when some
/// coordinate alone spans the solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn finite(&self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(*v),
            RateValue::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RateConstants {
    pub iota: f64,
    pub iota_tilde: f64,
    pub a_inf: RateValue,
    pub a_inf_up: RateValue,
}

/// iota = lambda_min^+(Q) / (N max_i Q_ii).
pub fn iota(problem: &QuadProblem, opts: &EigenOpts) -> Result<f64> {
    let n = problem.n();
    let max_diag = problem.diag().iter().fold(0.0f64, |m, &d| m.max(d));
    let lam_min_plus = if n <= opts.dense_limit {
        let dense = problem.op().to_dense(opts.dense_budget)?;
        let eigs = dense.symmetric_eigenvalues();
        smallest_nonzero(eigs.as_slice(), opts.null_rel_tol)?
    } else {
        // Iterative fallback: certifies positive-definite spectra only.
        let op = problem.op();
        let (min, max) = lanczos_extremes(n, opts, |v, out| op.matvec_into(v, out))?;
        if min <= opts.null_rel_tol * max {
            return Err(Error::Eigensolver(format!(
                "order {n} exceeds the dense limit and the smallest Ritz value {min:e} \
                 cannot be separated from zero; iota needs the dense path here"
            )));
        }
        min
    };
    Ok(lam_min_plus / (n as f64 * max_diag))
}

/// iota~ = 1 / (N lambda_max(W^{1/2} Q^+ W^{1/2})) >= iota.
pub fn iota_tilde(problem: &QuadProblem, opts: &EigenOpts) -> Result<f64> {
    let n = problem.n();
    let w_sqrt: Vec<f64> = problem.diag().iter().map(|d| d.sqrt()).collect();
    if n <= opts.dense_limit {
        let dense = problem.op().to_dense(opts.dense_budget)?;
        let se = nalgebra::SymmetricEigen::new(dense);
        let lam_max = se.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lam_max > 0.0) {
            return Err(Error::Eigensolver("operator has no positive spectrum".to_string()));
        }
        let cut = opts.null_rel_tol * lam_max;
        // With B = W^{1/2} Q^+ W^{1/2} = M M', M's columns are
        // W^{1/2} v_k / sqrt(lam_k) over the nonzero spectrum, so the top
        // eigenvalue of B equals that of the small Gram matrix M'M.
        let mut m_cols: Vec<Vec<f64>> = Vec::new();
        for k in 0..n {
            let lam = se.eigenvalues[k];
            if lam > cut {
                let inv_sqrt = 1.0 / lam.sqrt();
                m_cols.push(
                    (0..n)
                        .map(|i| w_sqrt[i] * se.eigenvectors[(i, k)] * inv_sqrt)
                        .collect(),
                );
            }
        }
        if m_cols.is_empty() {
            return Err(Error::Eigensolver(
                "no eigenvalue above the null threshold".to_string(),
            ));
        }
        let r = m_cols.len();
        let mut gram = nalgebra::DMatrix::<f64>::zeros(r, r);
        for a in 0..r {
            for b in a..r {
                let g = dot(&m_cols[a], &m_cols[b]);
                gram[(a, b)] = g;
                gram[(b, a)] = g;
            }
        }
        let b_max = gram
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if !(b_max > 0.0) {
            return Err(Error::Eigensolver(
                "scaled pseudoinverse has no positive spectrum".to_string(),
            ));
        }
        Ok(1.0 / (n as f64 * b_max))
    } else {
        // Beyond the dense limit only the positive-definite case is safe,
        // where lambda_max(B) = 1 / lambda_min(W^{-1/2} Q W^{-1/2}).
        let w_inv_sqrt: Vec<f64> = w_sqrt.iter().map(|s| 1.0 / s).collect();
        let op = problem.op();
        let mut scratch = vec![0.0; n];
        let (min, max) = lanczos_extremes(n, opts, move |v, out| {
            for i in 0..n {
                scratch[i] = v[i] * w_inv_sqrt[i];
            }
            op.matvec_into(&scratch, out);
            for i in 0..n {
                out[i] *= w_inv_sqrt[i];
            }
        })?;
        if min <= opts.null_rel_tol * max {
            return Err(Error::Eigensolver(format!(
                "order {n} exceeds the dense limit and the scaled operator is not \
                 certifiably positive definite (smallest Ritz value {min:e})"
            )));
        }
        Ok(min / n as f64)
    }
}

fn smallest_nonzero(eigs: &[f64], null_rel_tol: f64) -> Result<f64> {
    let lam_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lam_max > 0.0) {
        return Err(Error::Eigensolver("operator has no positive spectrum".to_string()));
    }
    let cut = null_rel_tol * lam_max;
    let min = eigs
        .iter()
        .copied()
        .filter(|&l| l > cut)
        .fold(f64::INFINITY, f64::min);
    if min.is_finite() {
        Ok(min)
    } else {
        Err(Error::Eigensolver("no eigenvalue above the null threshold".to_string()))
    }
}

/// Asymptotic acceleration interval from the diagonal:
/// f_i = 1 - c_i^2 / (Q_ii c'Q^+c), a_inf = 1/max f_i, a_inf_up = 1/min f_i.
/// Cauchy-Schwarz keeps every f_i in [0, 1]; values at or below zero tag the
/// factor as infinite (a single coordinate already spans the solution).
pub fn a_infinity(problem: &QuadProblem) -> (RateValue, RateValue) {
    a_infinity_parts(problem.c(), problem.diag(), problem.const_term())
}

pub(crate) fn a_infinity_parts(c: &[f64], diag: &[f64], const_term: f64) -> (RateValue, RateValue) {
    // Per coordinate a_i = (Q_ii k) / (Q_ii k - c_i^2) with k = c'Q^+c: one
    // rounding fewer than inverting 1 - c_i^2/(Q_ii k), so clean fractions
    // stay exact. A non-positive denominator means the coordinate alone
    // spans the solution and its factor is unbounded.
    let mut a_min = f64::INFINITY;
    let mut a_max = f64::NEG_INFINITY;
    let mut any_unbounded = false;
    for (ci, di) in c.iter().zip(diag) {
        let num = di * const_term;
        let den = num - ci * ci;
        if den > 0.0 {
            let a = num / den;
            a_min = a_min.min(a);
            a_max = a_max.max(a);
        } else {
            any_unbounded = true;
        }
    }
    let lower = if a_min.is_finite() { RateValue::Finite(a_min) } else { RateValue::Infinite };
    let upper = if any_unbounded || !a_max.is_finite() {
        RateValue::Infinite
    } else {
        RateValue::Finite(a_max)
    };
    (lower, upper)
}

/// ||c||^2 in the Q^+ norm; identical to the stored constant term.
pub fn c_qdag_norm_sq(problem: &QuadProblem) -> f64 {
    problem.const_term()
}

pub fn rate_constants(problem: &QuadProblem, opts: &EigenOpts) -> Result<RateConstants> {
    let (a_inf, a_inf_up) = a_infinity(problem);
    Ok(RateConstants {
        iota: iota(problem, opts)?,
        iota_tilde: iota_tilde(problem, opts)?,
        a_inf,
        a_inf_up,
    })
}

/// Plain conjugate gradients on Q x = b from the origin. Used to recover the
/// constant term c'Q^+c when the solution is not known in closed form.
pub fn cg_solve(op: &SpsdOperator, b: &[f64], rel_tol: f64, max_iters: usize) -> Result<Vec<f64>> {
    let n = op.order();
    assert_eq!(b.len(), n);
    let norm_b = dot(b, b).sqrt();
    if norm_b == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = b.to_vec();
    let mut rr = norm_b * norm_b;
    let mut qp = vec![0.0; n];
    for k in 0..max_iters {
        op.matvec_into(&p, &mut qp);
        let pqp = dot(&p, &qp);
        if pqp <= 0.0 {
            return Err(Error::CgBreakdown { k: k as u64, pqp });
        }
        let a = rr / pqp;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * qp[i];
        }
        let rr2 = dot(&r, &r);
        if rr2.sqrt() <= rel_tol * norm_b {
            return Ok(x);
        }
        let beta = rr2 / rr;
        rr = rr2;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::CgNonConvergence {
        tol: rel_tol,
        iters: max_iters,
        residual: rr.sqrt() / norm_b,
    })
}

/// c'Q^+c via CG at relative tolerance `rel_tol`.
pub fn cg_const_term(op: &SpsdOperator, c: &[f64], rel_tol: f64, max_iters: usize) -> Result<f64> {
    let x = cg_solve(op, c, rel_tol, max_iters)?;
    Ok(dot(c, &x))
}

#[derive(Debug, Clone, Copy)]
pub struct AsymptoticReport {
    /// Earliest index from which every later step satisfies the accelerated
    /// bound; `None` when fewer than 10 trailing steps satisfy it.
    pub k_epsilon: Option<u64>,
    /// Steps checked (trace length minus one).
    pub steps: usize,
    /// Steps violating the accelerated bound.
    pub violations: usize,
}

/// Check R(x^{k+1}) <= (1 - iota (1-eps) a_inf + slack) R(x^k) along a trace
/// of one of the relaxed-objective methods.
pub fn asymptotic_rate_check(
    report: &RunReport,
    constants: &RateConstants,
    epsilon: f64,
) -> Result<AsymptoticReport> {
    if !matches!(report.method, Method::HR | Method::BiR) {
        return Err(Error::invalid(format!(
            "asymptotic rate check applies to relaxed-objective methods, got {}",
            report.method
        )));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    let r: Vec<f64> = report.records.iter().map(|t| t.r).collect();
    if r.len() < 2 {
        return Err(Error::invalid("trace too short for a rate check".to_string()));
    }
    let satisfied: Box<dyn Fn(f64, f64) -> bool> = match constants.a_inf {
        RateValue::Finite(a) => {
            let theta = 1.0 - constants.iota * (1.0 - epsilon) * a + 1e-10;
            Box::new(move |prev: f64, next: f64| next <= theta * prev)
        }
        // Unbounded acceleration: the bound collapses to exact zero.
        RateValue::Infinite => Box::new(|_prev: f64, next: f64| next == 0.0),
    };
    let mut violations = 0;
    let mut last_violation: Option<usize> = None;
    for j in 0..r.len() - 1 {
        if !satisfied(r[j], r[j + 1]) {
            violations += 1;
            last_violation = Some(j);
        }
    }
    let k_eps = match last_violation {
        None => 0,
        Some(j) => j + 1,
    };
    let tail = r.len() - 1 - k_eps;
    Ok(AsymptoticReport {
        k_epsilon: if tail >= 10 { Some(k_eps as u64) } else { None },
        steps: r.len() - 1,
        violations,
    })
}

/// Lanczos with full reorthogonalisation for extremal eigenvalues of a
/// symmetric operator given by its action. Deterministic seeded start; the
/// estimates are exact on the explored Krylov space, so isolated eigenvalues
/// orthogonal to the start vector can in principle be missed.
pub(crate) fn lanczos_extremes(
    n: usize,
    opts: &EigenOpts,
    mut apply: impl FnMut(&[f64], &mut [f64]),
) -> Result<(f64, f64)> {
    let steps = opts.max_lanczos.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x51CE);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let norm = dot(&v, &v).sqrt();
    for vi in v.iter_mut() {
        *vi /= norm;
    }
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let mut prev_ext: Option<(f64, f64)> = None;
    let mut stable = 0;
    for k in 0..steps {
        apply(&basis[k], &mut w);
        let alpha = dot(&basis[k], &w);
        alphas.push(alpha);
        for (wi, bi) in w.iter_mut().zip(&basis[k]) {
            *wi -= alpha * bi;
        }
        if k > 0 {
            let beta_prev = betas[k - 1];
            for (wi, bi) in w.iter_mut().zip(&basis[k - 1]) {
                *wi -= beta_prev * bi;
            }
        }
        for b in &basis {
            let proj = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= proj * bi;
            }
        }
        let beta = dot(&w, &w).sqrt();
        let (lo, hi) = tridiag_extremes(&alphas, &betas);
        if let Some((plo, phi)) = prev_ext {
            let scale = lo.abs().max(hi.abs()).max(1e-300);
            if (lo - plo).abs() <= opts.iter_rel_tol * scale
                && (hi - phi).abs() <= opts.iter_rel_tol * scale
            {
                stable += 1;
                if stable >= 3 {
                    return Ok((lo, hi));
                }
            } else {
                stable = 0;
            }
        }
        prev_ext = Some((lo, hi));
        // Krylov space exhausted: the tridiagonal extremes are exact on it.
        if beta <= 1e-14 * alpha.abs().max(1.0) || k + 1 == n {
            return Ok((lo, hi));
        }
        betas.push(beta);
        basis.push(w.iter().map(|wi| wi / beta).collect());
    }
    Err(Error::Eigensolver(format!(
        "Lanczos did not stabilise extremal eigenvalues within {steps} steps \
         at relative tolerance {:e}",
        opts.iter_rel_tol
    )))
}

fn tridiag_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let k = alphas.len();
    let mut t = nalgebra::DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eigs = t.symmetric_eigenvalues();
    let lo = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}
