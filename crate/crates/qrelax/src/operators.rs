//! Symmetric positive-semidefinite operators exposed through column access.
//!
//! Solvers only ever touch the operator through `column`-shaped calls
//! (`axpy_column`) and occasional full products (`matvec`), so the same
//! algorithms run over dense storage, CSR sparse storage and implicit
//! Gram-plus-shift factorisations without materialising anything.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

#[derive(Debug, Clone)]
enum OpKind {
    /// Row-major `n * n` symmetric matrix.
    Dense { a: Vec<f64> },
    /// Full (both triangles) CSR storage; columns strictly increasing per row.
    Csr {
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        vals: Vec<f64>,
    },
    /// Q = X X' + gamma I + beta 1 1' with `X` row-major `n * m`.
    Gram {
        m: usize,
        x: Vec<f64>,
        gamma: f64,
        beta: f64,
    },
}

#[derive(Debug, Clone)]
pub struct SpsdOperator {
    n: usize,
    kind: OpKind,
}

fn check_finite(vals: &[f64], what: &'static str) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

impl SpsdOperator {
    /// Dense symmetric operator from a row-major buffer of length `n * n`.
    /// Symmetry must hold exactly: these operators come from symmetric
    /// construction rules, so any mismatch is a caller bug, not round-off.
    pub fn dense(n: usize, a: Vec<f64>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::invalid(format!(
                "dense operator of order {n} needs {} values, got {}",
                n * n,
                a.len()
            )));
        }
        check_finite(&a, "dense operator values")?;
        for i in 0..n {
            for j in (i + 1)..n {
                let (u, v) = (a[i * n + j], a[j * n + i]);
                if u != v {
                    return Err(Error::Asymmetric { i, j, a: u, b: v });
                }
            }
        }
        let op = SpsdOperator { n, kind: OpKind::Dense { a } };
        op.debug_check_psd();
        Ok(op)
    }

    pub fn dense_from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::invalid(format!(
                "operator must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let mut buf = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                buf[i * n + j] = a[(i, j)];
            }
        }
        Self::dense(n, buf)
    }

    /// CSR operator storing both triangles. Column indices must be strictly
    /// increasing within each row and the stored pattern exactly symmetric.
    pub fn csr(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, vals: Vec<f64>) -> Result<Self> {
        if row_ptr.len() != n + 1 {
            return Err(Error::invalid(format!(
                "row_ptr must have length {}, got {}",
                n + 1,
                row_ptr.len()
            )));
        }
        if col_idx.len() != vals.len() || row_ptr[0] != 0 || *row_ptr.last().unwrap() != vals.len()
        {
            return Err(Error::invalid("csr index arrays are inconsistent".to_string()));
        }
        check_finite(&vals, "csr operator values")?;
        for i in 0..n {
            let (lo, hi) = (row_ptr[i], row_ptr[i + 1]);
            if lo > hi {
                return Err(Error::invalid(format!("row_ptr decreases at row {i}")));
            }
            let mut prev: Option<usize> = None;
            for k in lo..hi {
                let j = col_idx[k];
                if j >= n {
                    return Err(Error::invalid(format!(
                        "column index {j} out of range in row {i}"
                    )));
                }
                if let Some(p) = prev {
                    if j <= p {
                        return Err(Error::invalid(format!(
                            "columns not strictly increasing in row {i}"
                        )));
                    }
                }
                prev = Some(j);
            }
        }
        let op = SpsdOperator { n, kind: OpKind::Csr { row_ptr, col_idx, vals } };
        op.check_csr_symmetry()?;
        op.debug_check_psd();
        Ok(op)
    }

    /// Build CSR storage from 0-based triplets covering both triangles.
    /// Duplicate coordinates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triplets.len());
        for &(i, j, v) in triplets {
            if i >= n || j >= n {
                return Err(Error::invalid(format!("triplet ({i},{j}) out of range for order {n}")));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite { what: "triplet values" });
            }
            entries.push((i, j, v));
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        // Entries arrive sorted, so duplicates are adjacent and per-row counts
        // prefix-sum into row_ptr directly.
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        Self::csr(n, row_ptr, col_idx, vals)
    }

    /// Implicit Q = X X' + gamma I + beta 1 1', `x` row-major `n * m`.
    pub fn gram_plus(n: usize, m: usize, x: Vec<f64>, gamma: f64, beta: f64) -> Result<Self> {
        if x.len() != n * m {
            return Err(Error::invalid(format!(
                "gram factor must have {} values, got {}",
                n * m,
                x.len()
            )));
        }
        check_finite(&x, "gram factor")?;
        if !(gamma >= 0.0 && beta >= 0.0) || !gamma.is_finite() || !beta.is_finite() {
            return Err(Error::invalid(format!(
                "gram shifts must be finite and non-negative, got gamma={gamma}, beta={beta}"
            )));
        }
        // PSD by construction; no spectral spot check needed.
        Ok(SpsdOperator { n, kind: OpKind::Gram { m, x, gamma, beta } })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            OpKind::Dense { .. } => "dense",
            OpKind::Csr { .. } => "sparse-csr",
            OpKind::Gram { .. } => "gram-plus",
        }
    }

    /// Stored entries of the CSR representation, if this operator is sparse.
    pub fn csr_parts(&self) -> Option<(&[usize], &[usize], &[f64])> {
        match &self.kind {
            OpKind::Csr { row_ptr, col_idx, vals } => Some((row_ptr, col_idx, vals)),
            _ => None,
        }
    }

    /// Column `i` of Q. By symmetry this equals row `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.column_into(i, &mut out);
        out
    }

    pub fn column_into(&self, i: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.n, "output buffer has wrong length");
        assert!(i < self.n, "column index out of range");
        match &self.kind {
            OpKind::Dense { a } => out.copy_from_slice(&a[i * self.n..(i + 1) * self.n]),
            OpKind::Csr { row_ptr, col_idx, vals } => {
                out.fill(0.0);
                for k in row_ptr[i]..row_ptr[i + 1] {
                    out[col_idx[k]] = vals[k];
                }
            }
            OpKind::Gram { m, x, gamma, beta } => {
                let wi = &x[i * m..(i + 1) * m];
                for (j, slot) in out.iter_mut().enumerate() {
                    let wj = &x[j * m..(j + 1) * m];
                    *slot = dot(wi, wj) + beta;
                }
                out[i] += gamma;
            }
        }
    }

    /// y += t * Q[:, i]. The solver hot path: O(nnz of the column).
    pub fn axpy_column(&self, i: usize, t: f64, y: &mut [f64]) {
        debug_assert_eq!(y.len(), self.n);
        match &self.kind {
            OpKind::Dense { a } => {
                let row = &a[i * self.n..(i + 1) * self.n];
                for (yj, &qij) in y.iter_mut().zip(row) {
                    *yj += t * qij;
                }
            }
            OpKind::Csr { row_ptr, col_idx, vals } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    y[col_idx[k]] += t * vals[k];
                }
            }
            OpKind::Gram { m, x, gamma, beta } => {
                let wi = &x[i * m..(i + 1) * m];
                for (j, yj) in y.iter_mut().enumerate() {
                    let wj = &x[j * m..(j + 1) * m];
                    *yj += t * (dot(wi, wj) + beta);
                }
                y[i] += t * gamma;
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.n, "vector has wrong length");
        assert_eq!(out.len(), self.n, "output buffer has wrong length");
        match &self.kind {
            OpKind::Dense { a } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot = dot(&a[i * self.n..(i + 1) * self.n], x);
                }
            }
            OpKind::Csr { row_ptr, col_idx, vals } => {
                for (i, slot) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        acc += vals[k] * x[col_idx[k]];
                    }
                    *slot = acc;
                }
            }
            OpKind::Gram { m, x: fac, gamma, beta } => {
                let mut w = vec![0.0; *m];
                for (row, &xi) in x.iter().enumerate() {
                    let r = &fac[row * m..(row + 1) * m];
                    for (wk, &rk) in w.iter_mut().zip(r) {
                        *wk += xi * rk;
                    }
                }
                let ones = beta * x.iter().sum::<f64>();
                for (i, slot) in out.iter_mut().enumerate() {
                    let r = &fac[i * m..(i + 1) * m];
                    *slot = dot(r, &w) + gamma * x[i] + ones;
                }
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        match &self.kind {
            OpKind::Dense { a } => (0..self.n).map(|i| a[i * self.n + i]).collect(),
            OpKind::Csr { row_ptr, col_idx, vals } => {
                let mut d = vec![0.0; self.n];
                for i in 0..self.n {
                    for k in row_ptr[i]..row_ptr[i + 1] {
                        if col_idx[k] == i {
                            d[i] = vals[k];
                        }
                    }
                }
                d
            }
            // Summation order matches column_into so both views agree bitwise.
            OpKind::Gram { m, x, gamma, beta } => (0..self.n)
                .map(|i| {
                    let r = &x[i * m..(i + 1) * m];
                    dot(r, r) + beta + gamma
                })
                .collect(),
        }
    }

    /// Materialise as a dense matrix, refusing when `8 n^2` exceeds `budget`
    /// bytes. Used by spectral diagnostics and the Hessian oracle.
    pub fn to_dense(&self, budget: u64) -> Result<DMatrix<f64>> {
        let bytes = 8u64.saturating_mul(self.n as u64).saturating_mul(self.n as u64);
        if bytes > budget {
            return Err(Error::MemoryBudget { n: self.n, budget });
        }
        let mut out = DMatrix::<f64>::zeros(self.n, self.n);
        let mut col = vec![0.0; self.n];
        for j in 0..self.n {
            self.column_into(j, &mut col);
            for i in 0..self.n {
                out[(i, j)] = col[i];
            }
        }
        Ok(out)
    }

    fn check_csr_symmetry(&self) -> Result<()> {
        let OpKind::Csr { row_ptr, col_idx, vals } = &self.kind else {
            return Ok(());
        };
        for i in 0..self.n {
            for k in row_ptr[i]..row_ptr[i + 1] {
                let j = col_idx[k];
                let row_j = &col_idx[row_ptr[j]..row_ptr[j + 1]];
                let found = row_j
                    .binary_search(&i)
                    .ok()
                    .map(|pos| vals[row_ptr[j] + pos]);
                match found {
                    Some(w) if w == vals[k] => {}
                    Some(w) => {
                        return Err(Error::Asymmetric { i, j, a: vals[k], b: w });
                    }
                    None => {
                        return Err(Error::Asymmetric { i, j, a: vals[k], b: 0.0 });
                    }
                }
            }
        }
        Ok(())
    }

    /// Debug-only spot check that the operator is numerically PSD.
    /// Skipped above order 512 (cost) and for Gram operators (PSD by
    /// construction).
    fn debug_check_psd(&self) {
        #[cfg(debug_assertions)]
        {
            if self.n == 0 || self.n > 512 || matches!(self.kind, OpKind::Gram { .. }) {
                return;
            }
            let dense = self
                .to_dense(u64::MAX)
                .expect("unbounded budget cannot fail");
            let max_abs = dense.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if max_abs == 0.0 {
                return;
            }
            let eig = dense.symmetric_eigenvalues();
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            debug_assert!(
                min >= -1e-8 * max_abs,
                "operator is not PSD: min eigenvalue {min:e} vs scale {max_abs:e}"
            );
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture_dense() -> SpsdOperator {
        // [[4, 1, 0], [1, 3, -1], [0, -1, 2]]
        SpsdOperator::dense(3, vec![4.0, 1.0, 0.0, 1.0, 3.0, -1.0, 0.0, -1.0, 2.0]).unwrap()
    }

    fn fixture_csr() -> SpsdOperator {
        let trips = vec![
            (0, 0, 4.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (1, 2, -1.0),
            (2, 1, -1.0),
            (2, 2, 2.0),
        ];
        SpsdOperator::from_triplets(3, &trips).unwrap()
    }

    #[test]
    fn dense_rejects_asymmetry() {
        let err = SpsdOperator::dense(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert!(matches!(err, Error::Asymmetric { .. }));
    }

    #[test]
    fn dense_rejects_non_finite() {
        let err = SpsdOperator::dense(2, vec![1.0, f64::NAN, f64::NAN, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn column_matches_matvec_unit_vector() {
        for op in [fixture_dense(), fixture_csr()] {
            for i in 0..3 {
                let mut e = vec![0.0; 3];
                e[i] = 1.0;
                assert_eq!(op.column(i), op.matvec(&e), "kind {}", op.kind_name());
            }
        }
    }

    #[test]
    fn gram_matches_materialised_product() {
        // X = [[1, 2], [0, 1], [-1, 1]], gamma = 0.5, beta = 0.25
        let x = vec![1.0, 2.0, 0.0, 1.0, -1.0, 1.0];
        let op = SpsdOperator::gram_plus(3, 2, x.clone(), 0.5, 0.25).unwrap();
        let dense = op.to_dense(u64::MAX).unwrap();
        // Entry (0,2): row0 . row2 + beta = (1*-1 + 2*1) + 0.25
        assert_eq!(dense[(0, 2)], 1.25);
        assert_eq!(dense[(0, 0)], 5.0 + 0.75);
        let v = vec![0.3, -0.7, 0.9];
        let want: Vec<f64> = (0..3).map(|i| (0..3).map(|j| dense[(i, j)] * v[j]).sum()).collect();
        let got = op.matvec(&v);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn axpy_column_accumulates() {
        let op = fixture_csr();
        let mut y = vec![1.0, 1.0, 1.0];
        op.axpy_column(1, 2.0, &mut y);
        assert_eq!(y, vec![3.0, 7.0, -1.0]);
    }

    #[test]
    fn from_triplets_sums_duplicates() {
        let trips = vec![
            (0, 1, 1.0),
            (0, 1, 2.0),
            (1, 0, 3.0),
            (0, 0, 1.0),
            (0, 0, 3.0),
            (1, 1, 4.0),
        ];
        let op = SpsdOperator::from_triplets(2, &trips).unwrap();
        assert_eq!(op.column(0), vec![4.0, 3.0]);
        assert_eq!(op.column(1), vec![3.0, 4.0]);
    }

    #[test]
    fn from_triplets_rejects_asymmetric_sum() {
        let trips = vec![(0, 1, 1.0), (1, 0, 2.0), (0, 0, 1.0), (1, 1, 1.0)];
        assert!(SpsdOperator::from_triplets(2, &trips).is_err());
    }

    #[test]
    fn to_dense_respects_budget() {
        let op = fixture_dense();
        assert!(matches!(op.to_dense(8), Err(Error::MemoryBudget { .. })));
        assert!(op.to_dense(1 << 20).is_ok());
    }

    #[test]
    fn diagonal_matches_columns() {
        for op in [fixture_dense(), fixture_csr()] {
            let d = op.diagonal();
            for i in 0..3 {
                assert_eq!(d[i], op.column(i)[i]);
            }
        }
    }
}
