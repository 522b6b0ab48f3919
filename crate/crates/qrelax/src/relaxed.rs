//! The rescaling-invariant relaxation
//!
//!   R(x) = const - (c'x)^2 / (x'Qx)   on the cone  C = { x : c'x > 0 },
//!   R(x) = const                       elsewhere,
//!
//! together with its exact line search, per-direction improvement and the
//! acceleration factor relating it to the plain quadratic. Everything here
//! works off two O(1) cache bundles so coordinate steps never touch the
//! operator beyond what the solver already holds.

use crate::error::{Error, Result};
use crate::operators::dot;
use crate::quadratic::QuadProblem;
use nalgebra::DMatrix;

/// Collinearity threshold: v'Qv - (v'Qx)^2/(x'Qx) <= eta * v'Qv means Qv is
/// treated as parallel to Qx and the restriction of R is constant.
pub const COLLINEAR_REL_TOL: f64 = 1e-12;

/// Scalars attached to the current iterate: c'x and x'Qx.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterateCache {
    pub c_dot_x: f64,
    pub x_q_x: f64,
}

/// Scalars attached to a search direction: c'v, v'Qx and v'Qv.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionCache {
    pub c_dot_v: f64,
    pub v_q_x: f64,
    pub v_q_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedEval {
    /// s_x = c'x / x'Qx on the cone, zero elsewhere.
    pub scale: f64,
    /// R(x), un-clamped.
    pub value: f64,
    pub in_cone: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineSearchCase {
    /// Unique interior minimiser at step `tau`; the new iterate stays in C.
    InteriorMin { tau: f64 },
    /// Strictly monotone toward `sign(c'v) * infinity`; infimum not attained.
    Monotone { toward_positive: bool },
    /// Qv parallel to Qx: the restriction is constant, minimum taken at 0.
    Collinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearchOutcome {
    pub case: LineSearchCase,
    /// Value reached: R at the minimiser for `InteriorMin`/`Collinear`, the
    /// unattained infimum for `Monotone`.
    pub new_r: f64,
}

/// One-sided slope of R along a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DirDerivative {
    /// Entering the cone from the null space: unbounded descent signal.
    NegInfinite,
    Finite(f64),
}

impl IterateCache {
    /// Fresh caches from a full product (one operator application).
    pub fn compute(problem: &QuadProblem, x: &[f64]) -> Self {
        let qx = problem.op().matvec(x);
        IterateCache {
            c_dot_x: dot(problem.c(), x),
            x_q_x: dot(x, &qx),
        }
    }

    pub fn in_cone(&self) -> bool {
        self.c_dot_x > 0.0
    }

    /// Null-space membership is an exact test: for PSD Q, x'Qx = 0 iff Qx = 0.
    pub fn in_null_space(&self) -> bool {
        self.x_q_x == 0.0
    }

    /// s_x, the minimiser of t -> D(t x).
    pub fn scale(&self) -> f64 {
        if self.in_cone() {
            self.c_dot_x / self.x_q_x
        } else {
            0.0
        }
    }
}

impl DirectionCache {
    /// Caches for the coordinate direction e_i, free given Qx and the diagonal.
    pub fn coordinate(problem: &QuadProblem, qx: &[f64], i: usize) -> Self {
        DirectionCache {
            c_dot_v: problem.c()[i],
            v_q_x: qx[i],
            v_q_v: problem.diag()[i],
        }
    }

    /// Caches for an arbitrary direction (one operator application).
    pub fn general(problem: &QuadProblem, qx: &[f64], v: &[f64]) -> Self {
        let qv = problem.op().matvec(v);
        DirectionCache {
            c_dot_v: dot(problem.c(), v),
            v_q_x: dot(v, qx),
            v_q_v: dot(v, &qv),
        }
    }
}

/// R and s at an iterate described by its caches.
pub fn rescale_and_eval(const_term: f64, xc: IterateCache) -> Result<RelaxedEval> {
    if xc.in_cone() && xc.in_null_space() {
        // c'x > 0 with Qx = 0 contradicts c in range(Q).
        return Err(Error::bad_problem(format!(
            "c'x = {:e} > 0 on the null space; c is not in range(Q)",
            xc.c_dot_x
        )));
    }
    if xc.in_cone() {
        let s = xc.c_dot_x / xc.x_q_x;
        Ok(RelaxedEval {
            scale: s,
            value: const_term - s * xc.c_dot_x,
            in_cone: true,
        })
    } else {
        Ok(RelaxedEval { scale: 0.0, value: const_term, in_cone: false })
    }
}

/// Convenience wrapper computing caches from the vector.
pub fn eval_r(problem: &QuadProblem, x: &[f64]) -> Result<RelaxedEval> {
    rescale_and_eval(problem.const_term(), IterateCache::compute(problem, x))
}

/// The bilinear pair (Upsilon(x; v), Upsilon(v; x)) with
/// Upsilon(a; b) = (c'b)(a'Qa) - (c'a)(b'Qa).
pub fn upsilon_pair(xc: IterateCache, vc: DirectionCache) -> (f64, f64) {
    let ups_xv = vc.c_dot_v * xc.x_q_x - xc.c_dot_x * vc.v_q_x;
    let ups_vx = xc.c_dot_x * vc.v_q_v - vc.c_dot_v * vc.v_q_x;
    (ups_xv, ups_vx)
}

/// Qv parallel to Qx up to `COLLINEAR_REL_TOL`. Requires x'Qx > 0.
pub fn is_collinear(xc: IterateCache, vc: DirectionCache) -> bool {
    debug_assert!(xc.x_q_x > 0.0);
    vc.v_q_v - vc.v_q_x * vc.v_q_x / xc.x_q_x <= COLLINEAR_REL_TOL * vc.v_q_v
}

/// Exact minimisation of t -> R(x + t v) for x in the cone.
///
/// Case order matters: collinearity is decided first, so directions with
/// Qv parallel to Qx (including v = -x) report `Collinear` even though the
/// restriction is also weakly monotone.
pub fn line_search_r(
    const_term: f64,
    xc: IterateCache,
    vc: DirectionCache,
) -> Result<LineSearchOutcome> {
    if !xc.in_cone() || xc.in_null_space() {
        return Err(Error::invalid(format!(
            "line search on R requires an iterate in the cone: c'x = {:e}, x'Qx = {:e}",
            xc.c_dot_x, xc.x_q_x
        )));
    }
    if is_collinear(xc, vc) {
        let r_here = const_term - xc.c_dot_x * xc.c_dot_x / xc.x_q_x;
        return Ok(LineSearchOutcome { case: LineSearchCase::Collinear, new_r: r_here });
    }
    let (ups_xv, ups_vx) = upsilon_pair(xc, vc);
    if ups_vx > 0.0 {
        let tau = ups_xv / ups_vx;
        let ctx2 = xc.c_dot_x + tau * vc.c_dot_v;
        let xqx2 = xc.x_q_x + tau * (2.0 * vc.v_q_x + tau * vc.v_q_v);
        let new_r = const_term - ctx2 * ctx2 / xqx2;
        if !(tau.is_finite() && xqx2 > 0.0 && new_r.is_finite()) {
            return Err(Error::NonFinite { what: "relaxed line-search update" });
        }
        Ok(LineSearchOutcome { case: LineSearchCase::InteriorMin { tau }, new_r })
    } else {
        // Non-collinear with Upsilon(v; x) <= 0 forces c'v != 0.
        let infimum = const_term - vc.c_dot_v * vc.c_dot_v / vc.v_q_v;
        Ok(LineSearchOutcome {
            case: LineSearchCase::Monotone { toward_positive: vc.c_dot_v > 0.0 },
            new_r: infimum,
        })
    }
}

/// Improvement of the exact line search on R: R(x) - R(x + tau v) when the
/// search lands in the interior case, zero for collinear directions. For
/// monotone directions the value is still I_D(s_x x; v) * A(x; v) — the
/// identity the solvers rank coordinates by — but no finite step attains it.
/// Requires x'Qx > 0.
pub fn improvement_r(xc: IterateCache, vc: DirectionCache) -> f64 {
    if is_collinear(xc, vc) {
        return 0.0;
    }
    let s = xc.scale();
    let num = s * vc.v_q_x - vc.c_dot_v;
    let denom = vc.v_q_v - vc.v_q_x * vc.v_q_x / xc.x_q_x;
    num * num / denom
}

/// Acceleration factor A(x; v) = (1 - (v'Qx)^2 / ((v'Qv)(x'Qx)))^{-1} >= 1,
/// with +infinity as the sentinel for collinear directions.
pub fn acceleration(xc: IterateCache, vc: DirectionCache) -> f64 {
    if is_collinear(xc, vc) {
        return f64::INFINITY;
    }
    let ratio = vc.v_q_x * vc.v_q_x / (vc.v_q_v * xc.x_q_x);
    1.0 / (1.0 - ratio)
}

/// One-sided directional derivative of R at x along v.
pub fn directional_derivative(xc: IterateCache, vc: DirectionCache) -> DirDerivative {
    if xc.in_null_space() && vc.c_dot_v > 0.0 {
        return DirDerivative::NegInfinite;
    }
    let s = xc.scale();
    DirDerivative::Finite(2.0 * s * (s * vc.v_q_x - vc.c_dot_v))
}

/// Gradient of R at x (requires x outside the null space):
/// grad R(x) = 2 s_x (s_x Qx - c).
pub fn grad_r(problem: &QuadProblem, x: &[f64]) -> Result<Vec<f64>> {
    let qx = problem.op().matvec(x);
    let xc = IterateCache { c_dot_x: dot(problem.c(), x), x_q_x: dot(x, &qx) };
    if xc.in_null_space() {
        return Err(Error::invalid(
            "gradient of R is undefined on the null space of Q".to_string(),
        ));
    }
    let s = xc.scale();
    Ok(qx
        .iter()
        .zip(problem.c())
        .map(|(qxi, ci)| 2.0 * s * (s * qxi - ci))
        .collect())
}

/// Dense Hessian of R at a cone point:
/// H = 2 [ s^2 Q - (1/x'Qx) g g' ],  g = 2 s Qx - c.
/// Materialises Q, so the order is capped by `dense_budget` bytes.
pub fn hessian_r(problem: &QuadProblem, x: &[f64], dense_budget: u64) -> Result<DMatrix<f64>> {
    let qx = problem.op().matvec(x);
    let xc = IterateCache { c_dot_x: dot(problem.c(), x), x_q_x: dot(x, &qx) };
    if !xc.in_cone() || xc.in_null_space() {
        return Err(Error::invalid(format!(
            "Hessian of R requires a cone point: c'x = {:e}, x'Qx = {:e}",
            xc.c_dot_x, xc.x_q_x
        )));
    }
    let s = xc.scale();
    let q = problem.op().to_dense(dense_budget)?;
    let n = problem.n();
    let g: Vec<f64> = qx
        .iter()
        .zip(problem.c())
        .map(|(qxi, ci)| 2.0 * s * qxi - ci)
        .collect();
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            h[(i, j)] = 2.0 * (s * s * q[(i, j)] - g[i] * g[j] / xc.x_q_x);
        }
    }
    Ok(h)
}
