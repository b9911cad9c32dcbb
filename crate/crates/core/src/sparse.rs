//! Compressed-row matrices and a reusable sparse LU factorisation.

use faer::prelude::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::MatMut;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    /// Column indices, sorted within each row.
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix with the pattern given by sorted, deduplicated rows.
    pub fn from_pattern(ncols: usize, rows: Vec<Vec<usize>>) -> Self {
        let nrows = rows.len();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for mut r in rows {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(&r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Position of `(row, col)` in `values`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        self.col_idx[lo..hi].binary_search(&col).ok().map(|k| lo + k)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.position(row, col).map_or(0.0, |k| self.values[k])
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// `y = A^T x`
    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.ncols];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += v * xi;
            }
        }
        y
    }

    /// Replaces each listed row by the identity row and zeroes the listed
    /// columns elsewhere. Both must be present in the pattern (square case).
    pub fn constrain(&mut self, constrained: &[bool]) {
        for i in 0..self.nrows {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            if constrained[i] {
                for k in r {
                    self.values[k] = if self.col_idx[k] == i { 1.0 } else { 0.0 };
                }
            } else {
                for k in r {
                    if constrained[self.col_idx[k]] {
                        self.values[k] = 0.0;
                    }
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.nrows * self.ncols];
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[i * self.ncols + j] += v;
            }
        }
        d
    }
}

/// Sparse LU that keeps the symbolic analysis for matrices sharing one
/// pattern. The CSR arrays are read as the CSC form of the transpose, and
/// systems are solved with the transposed factors.
pub struct SparseLu {
    n: usize,
    symbolic: SymbolicLu<usize>,
    numeric: Option<Lu<usize, f64>>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu").field("n", &self.n).finish()
    }
}

impl SparseLu {
    pub fn analyze(mat: &CsrMatrix) -> Result<Self> {
        if mat.nrows != mat.ncols {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows,
                got: mat.ncols,
            });
        }
        let sym = SymbolicSparseColMatRef::new_checked(mat.ncols, mat.nrows, &mat.row_ptr, None, &mat.col_idx);
        let symbolic = SymbolicLu::try_new(sym).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Self {
            n: mat.nrows,
            symbolic,
            numeric: None,
        })
    }

    /// Numeric factorisation of a matrix with the analysed pattern.
    pub fn factor(&mut self, mat: &CsrMatrix) -> Result<()> {
        let sym = SymbolicSparseColMatRef::new_checked(mat.ncols, mat.nrows, &mat.row_ptr, None, &mat.col_idx);
        let view = SparseColMatRef::new(sym, &mat.values);
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), view).map_err(|e| Error::Factorization(format!("{e:?}")))?;
        self.numeric = Some(lu);
        Ok(())
    }

    /// Solves `A x = b` in place. Non-finite output is reported as a
    /// singular factorisation.
    pub fn solve_in_place(&self, b: &mut [f64]) -> Result<()> {
        let lu = self
            .numeric
            .as_ref()
            .ok_or_else(|| Error::Factorization("matrix not factored".into()))?;
        debug_assert_eq!(b.len(), self.n);
        let n = b.len();
        let rhs = MatMut::from_column_major_slice_mut(b, n, 1);
        lu.solve_transpose_in_place(rhs);
        if let Some(k) = b.iter().position(|v| !v.is_finite()) {
            return Err(Error::Factorization(format!(
                "singular matrix (non-finite solution at unknown {k})"
            )));
        }
        Ok(())
    }
}

/// One-shot factor and solve.
pub fn solve(mat: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let mut lu = SparseLu::analyze(mat)?;
    lu.factor(mat)?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x)?;
    Ok(x)
}
