//! The quadratic objective D(x) = x'Qx - 2c'x + c'alpha and its exact
//! coordinate machinery.
//!
//! `c` must lie in the range of Q with a nonzero value; the constant term
//! equals c'Q^+c, so D(x) = ||x - alpha||_Q^2 >= 0 whenever alpha solves
//! Q alpha = c.

use crate::error::{Error, Result};
use crate::operators::{dot, SpsdOperator};
use crate::pick::CoordinatePicker;

/// Relative tolerance for the range-consistency check ||Q alpha - c||.
const CONSISTENCY_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct QuadProblem {
    op: SpsdOperator,
    c: Vec<f64>,
    alpha: Option<Vec<f64>>,
    const_term: f64,
    diag: Vec<f64>,
}

impl QuadProblem {
    /// Build a problem from a known solution: c = Q alpha, constant c'alpha.
    pub fn with_solution(op: SpsdOperator, c: Vec<f64>, alpha: Vec<f64>) -> Result<Self> {
        let n = op.order();
        if alpha.len() != n {
            return Err(Error::invalid(format!(
                "alpha has length {}, operator order is {n}",
                alpha.len()
            )));
        }
        if !alpha.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "alpha" });
        }
        let c_scale = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let qa = op.matvec(&alpha);
        let drift = qa
            .iter()
            .zip(&c)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if drift > CONSISTENCY_REL_TOL * c_scale {
            return Err(Error::bad_problem(format!(
                "c does not match Q alpha: ||Q alpha - c||_inf = {drift:e} vs scale {c_scale:e}"
            )));
        }
        let mut const_term = dot(&c, &alpha);
        // const_term = alpha'Q alpha, non-negative up to dot-product round-off.
        if const_term < 0.0 {
            let scale: f64 = c.iter().zip(&alpha).map(|(a, b)| (a * b).abs()).sum();
            if const_term < -1e-10 * scale.max(1.0) {
                return Err(Error::bad_problem(format!(
                    "c'alpha = {const_term:e} is negative beyond round-off"
                )));
            }
            const_term = 0.0;
        }
        Self::validated(op, c, Some(alpha), const_term)
    }

    /// Build a problem from the constant term c'Q^+c directly, for instances
    /// whose exact solution is not available.
    pub fn with_const_term(op: SpsdOperator, c: Vec<f64>, const_term: f64) -> Result<Self> {
        if !const_term.is_finite() || const_term < 0.0 {
            return Err(Error::bad_problem(format!(
                "constant term must be finite and non-negative, got {const_term:e}"
            )));
        }
        Self::validated(op, c, None, const_term)
    }

    fn validated(
        op: SpsdOperator,
        c: Vec<f64>,
        alpha: Option<Vec<f64>>,
        const_term: f64,
    ) -> Result<Self> {
        let n = op.order();
        if n == 0 {
            return Err(Error::invalid("operator order must be positive".to_string()));
        }
        if c.len() != n {
            return Err(Error::invalid(format!(
                "c has length {}, operator order is {n}",
                c.len()
            )));
        }
        if !c.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { what: "c" });
        }
        if c.iter().all(|&v| v == 0.0) {
            return Err(Error::bad_problem("c must be nonzero".to_string()));
        }
        let diag = op.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            return Err(Error::bad_problem(format!(
                "diagonal entry {i} is {:e}; all Q_ii must be strictly positive",
                diag[i]
            )));
        }
        Ok(QuadProblem { op, c, alpha, const_term, diag })
    }

    pub fn op(&self) -> &SpsdOperator {
        &self.op
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    /// Known minimiser, when the instance was built from one.
    pub fn alpha(&self) -> Option<&[f64]> {
        self.alpha.as_deref()
    }

    /// c'Q^+c, which is both D(0) and the supremum of the relaxed objective.
    pub fn const_term(&self) -> f64 {
        self.const_term
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn n(&self) -> usize {
        self.op.order()
    }

    /// D(x) = x'Qx - 2c'x + const. One full product.
    pub fn eval_d(&self, x: &[f64]) -> f64 {
        let qx = self.op.matvec(x);
        dot(x, &qx) - 2.0 * dot(&self.c, x) + self.const_term
    }

    /// Qx - c.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = self.op.matvec(x);
        for (ri, ci) in r.iter_mut().zip(&self.c) {
            *ri -= ci;
        }
        r
    }

    /// Exact improvement of a line-search step along `v`:
    /// I_D(x; v) = (v'(Qx - c))^2 / v'Qv, zero for flat directions.
    pub fn improvement_d(&self, x: &[f64], v: &[f64]) -> f64 {
        let r = self.residual(x);
        let qv = self.op.matvec(v);
        let vqv = dot(v, &qv);
        if vqv <= 0.0 {
            return 0.0;
        }
        let vr = dot(v, &r);
        vr * vr / vqv
    }

    /// Exact step length minimising t -> D(x + t v). Flat directions (v'Qv = 0
    /// within round-off, necessarily with v'(Qx - c) = 0 on consistent
    /// problems) take no step.
    pub fn line_search_d(&self, x: &[f64], v: &[f64]) -> f64 {
        let r = self.residual(x);
        let qv = self.op.matvec(v);
        let vqv = dot(v, &qv);
        if vqv <= 0.0 {
            return 0.0;
        }
        -dot(v, &r) / vqv
    }

    /// Greatest-improvement coordinate for D given the residual r = Qx - c.
    pub fn select_bi_d(&self, residual: &[f64], picker: &mut CoordinatePicker) -> usize {
        debug_assert_eq!(residual.len(), self.n());
        picker.pick_max(self.n(), |i| improvement_d_coord(residual[i], self.diag[i]))
    }
}

/// Coordinate improvement I_D(x; e_i) = (Qx - c)_i^2 / Q_ii.
#[inline]
pub fn improvement_d_coord(r_i: f64, q_ii: f64) -> f64 {
    r_i * r_i / q_ii
}

/// Coordinate step length rho = -(Qx - c)_i / Q_ii.
#[inline]
pub fn line_search_d_coord(r_i: f64, q_ii: f64) -> f64 {
    -r_i / q_ii
}
