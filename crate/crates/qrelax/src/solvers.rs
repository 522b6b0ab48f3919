//! The five benchmark methods over a shared O(N)-per-step state.
//!
//! Coordinate methods hold x, Qx and the scalars c'x, x'Qx, updating all of
//! them in O(N) per step with exactly one operator column access; the
//! bookkeeping invariant `column_calls == #steps` (respectively `N * #iters`
//! for conjugate gradients) is exact, not approximate. Zero-length steps
//! still consume their column call: the method paid for the column before it
//! could know the step was degenerate.

use crate::error::{Error, Result};
use crate::operators::dot;
use crate::pick::{CoordinatePicker, TieBreakMode};
use crate::quadratic::QuadProblem;
use crate::relaxed::{
    acceleration, line_search_r, DirectionCache, IterateCache, LineSearchCase,
};
use std::fmt;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Greatest-improvement coordinate descent on D (equivalently the
    /// Gauss-Southwell-Lipschitz rule).
    CdD,
    /// CD-D with the iterate rescaled to its optimal ray multiple after
    /// every step.
    SrD,
    /// Relaxed-objective coordinate descent with the surrogate score
    /// |s Qx - c|_i^2 / Q_ii.
    HR,
    /// Relaxed-objective coordinate descent with the exact per-coordinate
    /// improvement score.
    BiR,
    /// Plain conjugate gradients on Q x = c, as the full-information
    /// baseline; each iteration is booked as N column calls.
    Cg,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::CdD, Method::SrD, Method::HR, Method::BiR, Method::Cg];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::CdD => "cd-d",
            Method::SrD => "sr-d",
            Method::HR => "h-r",
            Method::BiR => "bi-r",
            Method::Cg => "cg-d",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cd-d" | "cdd" => Some(Method::CdD),
            "sr-d" | "srd" => Some(Method::SrD),
            "h-r" | "hr" => Some(Method::HR),
            "bi-r" | "bir" => Some(Method::BiR),
            "cg-d" | "cg" => Some(Method::Cg),
            _ => None,
        }
    }

    /// Methods driven by the relaxed objective (initialised off the origin).
    pub fn is_relaxed(&self) -> bool {
        matches!(self, Method::HR | Method::BiR)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// One trace row. Objective values are clamped to their mathematical ranges
/// (D >= 0, 0 <= R <= const) at recording time; the solver state itself is
/// never clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub k: u64,
    pub column_calls: u64,
    /// Coordinate stepped at this row; `None` for the conventional k = 0 row
    /// and for CG iterations.
    pub coord: Option<usize>,
    /// Step length (rho or tau, sign included); `None` where `coord` is.
    pub step: Option<f64>,
    pub d: f64,
    pub r: f64,
    /// s_x at the recorded iterate; for SR-D the scale applied at this step.
    pub s: f64,
    /// Acceleration factor of the executed step; relaxed methods only, from
    /// k = 2 on. Infinity flags a degenerate (collinear no-op) step.
    pub accel: Option<f64>,
    pub wall_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Converged,
    BudgetExhausted,
    /// N consecutive steps without objective progress.
    Stalled,
    /// p'Qp <= 0 inside CG on a semidefinite operator.
    CgBreakdown,
}

impl Termination {
    pub fn tag(&self) -> &'static str {
        match self {
            Termination::Converged => "converged",
            Termination::BudgetExhausted => "budget-exhausted",
            Termination::Stalled => "stalled",
            Termination::CgBreakdown => "cg-breakdown",
        }
    }
}

/// At least one criterion must be set. Both the tolerance and the target are
/// absolute values of the method's own objective (D or R); the caller scales
/// by the starting objective if it wants a relative cut.
#[derive(Debug, Clone, Copy, Default)]
pub struct StopRule {
    pub max_column_calls: Option<u64>,
    pub objective_tolerance: Option<f64>,
    pub target: Option<f64>,
}

impl StopRule {
    pub fn budget(max_column_calls: u64) -> Self {
        StopRule { max_column_calls: Some(max_column_calls), ..Default::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.max_column_calls.is_none()
            && self.objective_tolerance.is_none()
            && self.target.is_none()
        {
            return Err(Error::invalid(
                "stop rule needs a budget, a tolerance or a target".to_string(),
            ));
        }
        if let Some(t) = self.objective_tolerance {
            if !(t >= 0.0) {
                return Err(Error::invalid(format!("tolerance must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub tie_break: TieBreakMode,
    /// Recompute Qx, c'x, x'Qx from scratch every this many steps to cap
    /// incremental-update drift. Hygiene work: books no column calls.
    pub refresh_every: Option<u64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tie_break: TieBreakMode::LowestIndex, refresh_every: Some(1000) }
    }
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub method: Method,
    pub termination: Termination,
    pub records: Vec<TraceRecord>,
    pub column_calls: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct RunSummary {
    pub method: Method,
    pub termination: Termination,
    pub column_calls: u64,
    /// Steps taken (CG iterations for the CG method).
    pub steps: u64,
    pub final_record: TraceRecord,
}

/// Run a method, collecting the full trace in memory.
pub fn run(
    problem: &QuadProblem,
    method: Method,
    stop: &StopRule,
    opts: &SolverOptions,
) -> Result<RunReport> {
    let mut records = Vec::new();
    let summary = run_with(problem, method, stop, opts, &mut |rec| records.push(*rec))?;
    Ok(RunReport {
        method,
        termination: summary.termination,
        records,
        column_calls: summary.column_calls,
    })
}

/// The conjugate-gradient baseline.
pub fn cg_run(problem: &QuadProblem, stop: &StopRule, opts: &SolverOptions) -> Result<RunReport> {
    run(problem, Method::Cg, stop, opts)
}

/// Run a method, streaming every trace row into `sink`. The caller owns
/// thinning and serialisation.
pub fn run_with(
    problem: &QuadProblem,
    method: Method,
    stop: &StopRule,
    opts: &SolverOptions,
    sink: &mut dyn FnMut(&TraceRecord),
) -> Result<RunSummary> {
    stop.validate()?;
    match method {
        Method::Cg => cg_loop(problem, stop, sink),
        _ => cd_loop(problem, method, stop, opts, sink),
    }
}

/// Turns cache values into trace rows. Both objectives are recomputed from
/// scratch each row (never copied from solver-internal deltas) so cache drift
/// shows up here. The method's own objective column is recorded as a running
/// minimum: once a method reaches its round-off floor the raw recomputation
/// rattles by ~ε·const, and the envelope keeps the column non-increasing. A
/// rise beyond what the refresh cadence permits is a numeric fault.
struct Emitter<'a> {
    const_term: f64,
    relaxed: bool,
    best_obj: f64,
    start: Instant,
    sink: &'a mut dyn FnMut(&TraceRecord),
    last: Option<TraceRecord>,
}

impl<'a> Emitter<'a> {
    fn new(const_term: f64, relaxed: bool, sink: &'a mut dyn FnMut(&TraceRecord)) -> Self {
        Emitter {
            const_term,
            relaxed,
            best_obj: f64::INFINITY,
            start: Instant::now(),
            sink,
            last: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn emit(
        &mut self,
        k: u64,
        calls: u64,
        coord: Option<usize>,
        step: Option<f64>,
        ctx: f64,
        xqx: f64,
        s_override: Option<f64>,
        accel: Option<f64>,
    ) -> Result<TraceRecord> {
        let d_raw = xqx - 2.0 * ctx + self.const_term;
        let in_cone = ctx > 0.0 && xqx > 0.0;
        let r_raw = if in_cone { self.const_term - ctx * ctx / xqx } else { self.const_term };
        if !d_raw.is_finite() || !r_raw.is_finite() {
            return Err(Error::NumericFault { k, what: "objective value is not finite" });
        }
        let mut d = d_raw.max(0.0);
        let mut r = r_raw.clamp(0.0, self.const_term);
        let obj = if self.relaxed { r } else { d };
        if obj > self.best_obj + 1e-8 * (1.0 + self.const_term) {
            return Err(Error::NumericFault { k, what: "objective rose above its running minimum" });
        }
        let obj = obj.min(self.best_obj);
        self.best_obj = obj;
        if self.relaxed {
            r = obj;
        } else {
            d = obj;
        }
        let s = s_override.unwrap_or(if in_cone { ctx / xqx } else { 0.0 });
        let rec = TraceRecord {
            k,
            column_calls: calls,
            coord,
            step,
            d,
            r,
            s,
            accel,
            wall_ns: self.start.elapsed().as_nanos() as u64,
        };
        (self.sink)(&rec);
        self.last = Some(rec);
        Ok(rec)
    }
}

/// Shared stop/stall bookkeeping: returns the termination once one fires.
struct Monitor {
    budget: u64,
    tol_abs: Option<f64>,
    target: Option<f64>,
    stall_after: u64,
    no_progress: u64,
    prev_obj: f64,
}

impl Monitor {
    fn new(stop: &StopRule, obj0: f64, n: usize) -> Self {
        Monitor {
            budget: stop.max_column_calls.unwrap_or(u64::MAX),
            tol_abs: stop.objective_tolerance,
            target: stop.target,
            stall_after: n as u64,
            no_progress: 0,
            prev_obj: obj0,
        }
    }

    fn converged(&self, obj: f64) -> bool {
        self.tol_abs.map(|t| obj <= t).unwrap_or(false)
            || self.target.map(|t| obj <= t).unwrap_or(false)
    }

    /// Record a step's objective; true when the stall counter trips.
    fn stalled(&mut self, obj: f64) -> bool {
        if obj < self.prev_obj {
            self.no_progress = 0;
        } else {
            self.no_progress += 1;
        }
        self.prev_obj = obj;
        self.no_progress >= self.stall_after
    }
}

fn cd_loop(
    problem: &QuadProblem,
    method: Method,
    stop: &StopRule,
    opts: &SolverOptions,
    sink: &mut dyn FnMut(&TraceRecord),
) -> Result<RunSummary> {
    let n = problem.n();
    let op = problem.op();
    let c = problem.c();
    let diag = problem.diag();
    let const_term = problem.const_term();
    let relaxed = method.is_relaxed();

    let mut picker = CoordinatePicker::new(opts.tie_break);
    let mut em = Emitter::new(const_term, relaxed, sink);

    let mut x = vec![0.0; n];
    let mut qx = vec![0.0; n];
    let mut ctx = 0.0;
    let mut xqx = 0.0;
    let mut k: u64 = 0;
    let mut calls: u64 = 0;

    let finish = |em: &Emitter, termination: Termination, calls: u64, k: u64| RunSummary {
        method,
        termination,
        column_calls: calls,
        steps: k,
        final_record: em.last.expect("at least the starting row was emitted"),
    };

    // Conventional starting row at the origin: D = R = const.
    let rec0 = em.emit(0, 0, None, None, ctx, xqx, None, None)?;
    let mut mon = Monitor::new(stop, const_term, n);
    if mon.converged(obj_of(method, &rec0)) {
        return Ok(finish(&em, Termination::Converged, calls, k));
    }

    if relaxed {
        // One-call initialisation: the best single signed coordinate.
        if calls + 1 > mon.budget {
            return Ok(finish(&em, Termination::BudgetExhausted, calls, k));
        }
        let i = picker.pick_max(n, |j| c[j] * c[j] / diag[j]);
        let sign = if c[i] >= 0.0 { 1.0 } else { -1.0 };
        x[i] = sign;
        op.axpy_column(i, sign, &mut qx);
        calls += 1;
        // Exact cache values for a signed unit coordinate vector.
        ctx = sign * c[i];
        xqx = diag[i];
        k = 1;
        let rec = em.emit(k, calls, Some(i), Some(sign), ctx, xqx, None, None)?;
        let obj = obj_of(method, &rec);
        if mon.converged(obj) {
            return Ok(finish(&em, Termination::Converged, calls, k));
        }
        if mon.stalled(obj) {
            return Ok(finish(&em, Termination::Stalled, calls, k));
        }
    }

    loop {
        if calls + 1 > mon.budget {
            return Ok(finish(&em, Termination::BudgetExhausted, calls, k));
        }

        let (coord, step, s_col, accel) = match method {
            Method::CdD | Method::SrD => {
                let i = picker.pick_max(n, |j| {
                    let r = qx[j] - c[j];
                    r * r / diag[j]
                });
                let rho = -(qx[i] - c[i]) / diag[i];
                let old_qxi = qx[i];
                x[i] += rho;
                op.axpy_column(i, rho, &mut qx);
                calls += 1;
                ctx += rho * c[i];
                xqx += rho * (2.0 * old_qxi + rho * diag[i]);
                if method == Method::SrD {
                    // Rescale to the optimal ray multiple; record that scale.
                    let s_u = if ctx > 0.0 && xqx > 0.0 { ctx / xqx } else { 0.0 };
                    if s_u > 0.0 {
                        for v in x.iter_mut() {
                            *v *= s_u;
                        }
                        for v in qx.iter_mut() {
                            *v *= s_u;
                        }
                        ctx *= s_u;
                        xqx *= s_u * s_u;
                    }
                    (i, rho, Some(s_u), None)
                } else {
                    (i, rho, None, None)
                }
            }
            Method::HR | Method::BiR => {
                if !(ctx > 0.0 && xqx > 0.0) {
                    return Err(Error::NumericFault {
                        k: k + 1,
                        what: "relaxed method left the cone",
                    });
                }
                let s = ctx / xqx;
                let i = match method {
                    Method::HR => picker.pick_max(n, |j| {
                        let num = s * qx[j] - c[j];
                        num * num / diag[j]
                    }),
                    _ => picker.pick_max(n, |j| {
                        let xc = IterateCache { c_dot_x: ctx, x_q_x: xqx };
                        let vc = DirectionCache { c_dot_v: c[j], v_q_x: qx[j], v_q_v: diag[j] };
                        crate::relaxed::improvement_r(xc, vc)
                    }),
                };
                let xc = IterateCache { c_dot_x: ctx, x_q_x: xqx };
                let vc = DirectionCache { c_dot_v: c[i], v_q_x: qx[i], v_q_v: diag[i] };
                let outcome = line_search_r(const_term, xc, vc)?;
                let (tau, accel) = match outcome.case {
                    LineSearchCase::InteriorMin { tau } => (tau, acceleration(xc, vc)),
                    LineSearchCase::Collinear => (0.0, f64::INFINITY),
                    LineSearchCase::Monotone { .. } => {
                        return Err(Error::MonotoneOutcome { k: k + 1, coord: i });
                    }
                };
                let old_qxi = qx[i];
                x[i] += tau;
                op.axpy_column(i, tau, &mut qx);
                calls += 1;
                ctx += tau * c[i];
                xqx += tau * (2.0 * old_qxi + tau * diag[i]);
                (i, tau, None, Some(accel))
            }
            Method::Cg => unreachable!("handled by cg_loop"),
        };

        k += 1;
        if let Some(every) = opts.refresh_every {
            if every > 0 && k % every == 0 {
                op.matvec_into(&x, &mut qx);
                ctx = dot(c, &x);
                xqx = dot(&x, &qx);
            }
        }
        let rec = em.emit(k, calls, Some(coord), Some(step), ctx, xqx, s_col, accel)?;
        let obj = obj_of(method, &rec);
        if mon.converged(obj) {
            return Ok(finish(&em, Termination::Converged, calls, k));
        }
        if mon.stalled(obj) {
            return Ok(finish(&em, Termination::Stalled, calls, k));
        }
    }
}

fn obj_of(method: Method, rec: &TraceRecord) -> f64 {
    if method.is_relaxed() {
        rec.r
    } else {
        rec.d
    }
}

fn cg_loop(
    problem: &QuadProblem,
    stop: &StopRule,
    sink: &mut dyn FnMut(&TraceRecord),
) -> Result<RunSummary> {
    let n = problem.n();
    let op = problem.op();
    let c = problem.c();
    let const_term = problem.const_term();
    let mut em = Emitter::new(const_term, false, sink);

    let mut x = vec![0.0; n];
    let mut r = c.to_vec();
    let mut p = c.to_vec();
    let mut rr = dot(&r, &r);
    let mut qp = vec![0.0; n];
    let mut k: u64 = 0;
    let mut calls: u64 = 0;

    let finish = |em: &Emitter, termination: Termination, calls: u64, k: u64| RunSummary {
        method: Method::Cg,
        termination,
        column_calls: calls,
        steps: k,
        final_record: em.last.expect("at least the starting row was emitted"),
    };

    let rec0 = em.emit(0, 0, None, None, 0.0, 0.0, None, None)?;
    let mut mon = Monitor::new(stop, const_term, n);
    if mon.converged(rec0.d) {
        return Ok(finish(&em, Termination::Converged, calls, k));
    }

    loop {
        if calls + n as u64 > mon.budget {
            return Ok(finish(&em, Termination::BudgetExhausted, calls, k));
        }
        op.matvec_into(&p, &mut qp);
        calls += n as u64;
        let pqp = dot(&p, &qp);
        if pqp <= 0.0 {
            // Breakdown on a semidefinite operator: flag and stop.
            return Ok(finish(&em, Termination::CgBreakdown, calls, k));
        }
        let a = rr / pqp;
        for i in 0..n {
            x[i] += a * p[i];
            r[i] -= a * qp[i];
        }
        // O(N) objective recovery: x'Qx = c'x - x'r, so
        // D = const - c'x - x'r with r the running residual c - Qx.
        let ctx = dot(c, &x);
        let xr = dot(&x, &r);
        let xqx = ctx - xr;
        let rr2 = dot(&r, &r);
        k += 1;
        let rec = em.emit(k, calls, None, None, ctx, xqx, None, None)?;
        if mon.converged(rec.d) || rr2 == 0.0 {
            return Ok(finish(&em, Termination::Converged, calls, k));
        }
        if mon.stalled(rec.d) {
            return Ok(finish(&em, Termination::Stalled, calls, k));
        }
        let beta = rr2 / rr;
        rr = rr2;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
}
