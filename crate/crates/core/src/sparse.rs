//! Compressed sparse row matrices and a symmetric `LDL^T` factorization.
//!
//! The factorization is a thin wrapper over faer's sparse Cholesky machinery:
//! a fill-reducing symbolic analysis done once per sparsity pattern and a
//! numeric factorization that can be repeated with new values. No pivoting is
//! done, so the input must be symmetric positive definite or quasi-definite.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};
use thiserror::Error;

use crate::par;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinSolveError {
    #[error("sparse factorization failed: {0}")]
    Factorization(String),
    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    Residual { residual: f64, tol: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
}

/// Square-or-rectangular CSR matrix with sorted, unique column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix { nrows, ncols, indptr, indices, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        match self.indices[a..b].binary_search(&j) {
            Ok(k) => self.values[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        par::map_range(self.nrows, |i| self.row(i).map(|(j, v)| v * x[j]).sum())
    }

    /// `x^T A y`
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        par::sum_range(self.nrows, |i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
    }

    /// `x^T A x`
    pub fn quad(&self, x: &[f64]) -> f64 {
        self.bilinear(x, x)
    }

    /// Row sums `A 1`.
    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// `sum_k c_k A_k` over matrices of identical shape.
    pub fn combine(terms: &[(f64, &CsrMatrix)]) -> Self {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut trip = Vec::new();
        for (c, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            trip.extend(m.triplets().into_iter().map(|(i, j, v)| (i, j, c * v)));
        }
        Self::from_triplets(nrows, ncols, trip)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.nrows == self.ncols
            && (0..self.nrows).all(|i| self.row(i).all(|(j, v)| (v - self.get(j, i)).abs() <= tol))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.triplets() {
            d[i][j] = v;
        }
        d
    }

    /// Principal submatrix dropping one row and column.
    pub fn without_index(&self, k: usize) -> Self {
        let shift = |i: usize| if i > k { i - 1 } else { i };
        let trip = self
            .triplets()
            .into_iter()
            .filter(|&(i, j, _)| i != k && j != k)
            .map(|(i, j, v)| (shift(i), shift(j), v))
            .collect();
        Self::from_triplets(self.nrows - 1, self.ncols - 1, trip)
    }

    /// Same pattern, fresh values in CSR order.
    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        CsrMatrix { values, ..self.clone() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.nrows == other.nrows && self.indptr == other.indptr && self.indices == other.indices
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].binary_search(&j).ok().map(|k| a + k)
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        // symmetric: the CSR arrays read as CSC describe the same matrix
        let sym = SymbolicSparseColMatRef::new_checked(self.nrows, self.ncols, &self.indptr, None, &self.indices);
        SparseColMatRef::new(sym, &self.values)
    }
}

/// Sparse `LDL^T` factorization of a symmetric matrix with a fixed pattern.
#[derive(Debug)]
pub struct SymmetricFactor {
    pattern: CsrMatrix,
    symbolic: SymbolicCholesky<usize>,
    l_values: Vec<f64>,
    factored: bool,
}

impl Clone for SymmetricFactor {
    fn clone(&self) -> Self {
        // SymbolicCholesky is not Clone; redo the (cheap) analysis.
        let mut out = SymmetricFactor::analyze(&self.pattern).expect("pattern analysed before");
        out.l_values.clone_from(&self.l_values);
        out.factored = self.factored;
        out
    }
}

impl SymmetricFactor {
    /// Symbolic analysis (AMD ordering + elimination tree) of `pattern`.
    pub fn analyze(pattern: &CsrMatrix) -> Result<Self, LinSolveError> {
        if pattern.nrows != pattern.ncols {
            return Err(LinSolveError::Dimension { expected: pattern.nrows, got: pattern.ncols });
        }
        let symbolic = factorize_symbolic_cholesky(
            pattern.as_faer().symbolic(),
            Side::Upper,
            Default::default(),
            Default::default(),
        )
        .map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?;
        let l_values = vec![0.0; symbolic.len_val()];
        Ok(SymmetricFactor { pattern: pattern.clone(), symbolic, l_values, factored: false })
    }

    /// Analyse and factor in one go.
    pub fn new(matrix: &CsrMatrix) -> Result<Self, LinSolveError> {
        let mut f = Self::analyze(matrix)?;
        f.factor(matrix)?;
        Ok(f)
    }

    pub fn dim(&self) -> usize {
        self.pattern.nrows
    }

    /// Numeric factorization of a matrix sharing the analysed pattern.
    pub fn factor(&mut self, matrix: &CsrMatrix) -> Result<(), LinSolveError> {
        if !matrix.same_pattern(&self.pattern) {
            return Err(LinSolveError::Factorization("sparsity pattern differs from the analysed one".into()));
        }
        let req = self
            .symbolic
            .factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default());
        let mut mem = MemBuffer::new(req);
        self.factored = false;
        self.symbolic
            .factorize_numeric_ldlt::<f64>(
                &mut self.l_values,
                matrix.as_faer(),
                Side::Upper,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| LinSolveError::Factorization(format!("{e:?}")))?;
        if self.l_values.iter().any(|v| !v.is_finite()) {
            return Err(LinSolveError::Factorization("non-finite factor entries".into()));
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<(), LinSolveError> {
        let n = self.dim();
        if rhs.len() != n {
            return Err(LinSolveError::Dimension { expected: n, got: rhs.len() });
        }
        if !self.factored {
            return Err(LinSolveError::Factorization("solve before numeric factorization".into()));
        }
        let req: StackReq = self.symbolic.solve_in_place_scratch::<f64>(1, Par::Seq);
        let mut mem = MemBuffer::new(req);
        let ldlt = LdltRef::<'_, usize, f64>::new(&self.symbolic, &self.l_values);
        let rhs_mat = MatMut::from_column_major_slice_mut(rhs, n, 1);
        ldlt.solve_in_place_with_conj(Conj::No, rhs_mat, Par::Seq, MemStack::new(&mut mem));
        Ok(())
    }

    /// Solves `A x = b` with a residual check relative to `|b|`, applying up
    /// to two steps of iterative refinement when needed.
    pub fn solve_checked(&self, matrix: &CsrMatrix, b: &[f64], rel_tol: f64) -> Result<Vec<f64>, LinSolveError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        let bnorm = norm2(b).max(f64::MIN_POSITIVE);
        let mut res = 0.0;
        for _ in 0..3 {
            let ax = matrix.mul_vec(&x);
            let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            res = norm2(&r) / bnorm;
            if res <= rel_tol {
                return Ok(x);
            }
            self.solve_in_place(&mut r)?;
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        let ax = matrix.mul_vec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let final_res = norm2(&r) / bnorm;
        if final_res <= rel_tol {
            Ok(x)
        } else {
            Err(LinSolveError::Residual { residual: final_res.max(res), tol: rel_tol })
        }
    }
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
