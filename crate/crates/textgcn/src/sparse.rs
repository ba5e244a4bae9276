//! Compressed sparse row matrices and the dense kernels built on them.
//!
//! Everything downstream (graph assembly, forward/backward passes) runs on
//! these two types. All scalars are f64. Kernels parallelize over output
//! rows only, with each row reduced sequentially, so results are bitwise
//! identical regardless of thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sparse matrix in canonical CSR form: strictly increasing column indices
/// within each row, no explicit zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a CSR matrix from (row, col, value) triplets. Duplicate
    /// coordinates are summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            if r >= rows || c >= cols {
                return Err(Error::InvalidMatrix(format!(
                    "triplet ({r}, {c}) out of bounds for {rows}x{cols}"
                )));
            }
        }
        entries.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; rows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut it = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(nr, nc, nv)) = it.peek() {
                if nr == r && nc == c {
                    v += nv;
                    it.next();
                } else {
                    break;
                }
            }
            if v != 0.0 {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
            }
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut row_ptr = vec![0usize; self.cols + 1];
        for &c in &self.col_idx {
            row_ptr[c + 1] += 1;
        }
        for i in 0..self.cols {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0f64; self.nnz()];
        let mut next = row_ptr.clone();
        for (r, c, v) in self.iter() {
            let slot = next[c];
            col_idx[slot] = r;
            values[slot] = v;
            next[c] += 1;
        }
        SparseMatrix {
            rows: self.cols,
            cols: self.rows,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }

    /// Sparse-dense product `self * b`.
    pub fn spmm(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(Error::DimensionMismatch(format!(
                "spmm: {}x{} * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, b.cols);
        out.data
            .par_chunks_mut(b.cols)
            .enumerate()
            .for_each(|(r, out_row)| {
                let (cols, vals) = self.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    let b_row = b.row(c);
                    for (o, &x) in out_row.iter_mut().zip(b_row) {
                        *o += v * x;
                    }
                }
            });
        Ok(out)
    }

    /// Transpose-product `selfᵀ * b` without materializing the transpose
    /// when the matrix is symmetric.
    pub fn spmm_transpose(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(Error::DimensionMismatch(format!(
                "spmm_transpose: ({}x{})ᵀ * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        if self.rows == self.cols && self.is_symmetric() {
            return self.spmm(b);
        }
        self.transpose().spmm(b)
    }

    /// Symmetric degree normalization: `Ã_ij = A_ij / sqrt(D_ii * D_jj)`
    /// with `D_ii` the row sum. Sparsity pattern is unchanged.
    pub fn normalize_symmetric(&self) -> Result<SparseMatrix> {
        if self.rows != self.cols {
            return Err(Error::InvalidMatrix(format!(
                "normalize_symmetric needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let mut inv_sqrt_deg = vec![0.0f64; self.rows];
        for (r, slot) in inv_sqrt_deg.iter_mut().enumerate() {
            let (_, vals) = self.row(r);
            let d: f64 = vals.iter().sum();
            if d <= 0.0 {
                return Err(Error::InvalidMatrix(format!(
                    "row {r} has non-positive degree {d}"
                )));
            }
            *slot = 1.0 / d.sqrt();
        }
        let mut out = self.clone();
        for r in 0..self.rows {
            let lo = out.row_ptr[r];
            let hi = out.row_ptr[r + 1];
            for k in lo..hi {
                out.values[k] *= inv_sqrt_deg[r] * inv_sqrt_deg[out.col_idx[k]];
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }
}

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "dense {}x{} needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// Dense product `self * b`.
    pub fn matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, b.cols);
        out.data
            .par_chunks_mut(b.cols)
            .enumerate()
            .for_each(|(r, out_row)| {
                let a_row = self.row(r);
                for (k, &a) in a_row.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (o, &x) in out_row.iter_mut().zip(b.row(k)) {
                        *o += a * x;
                    }
                }
            });
        Ok(out)
    }

    /// Product `selfᵀ * b`, used by the gradient accumulations.
    pub fn transpose_matmul(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != b.rows {
            return Err(Error::DimensionMismatch(format!(
                "transpose_matmul: ({}x{})ᵀ * {}x{}",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.cols, b.cols);
        // Accumulate sequentially over the shared dimension; output is small
        // (parameter-shaped) so this stays cheap and deterministic.
        for r in 0..self.rows {
            let a_row = self.row(r);
            let b_row = b.row(r);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = out.row_mut(i);
                for (o, &x) in out_row.iter_mut().zip(b_row) {
                    *o += a * x;
                }
            }
        }
        Ok(out)
    }

    /// Product `self * bᵀ`.
    pub fn matmul_transpose(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != b.cols {
            return Err(Error::DimensionMismatch(format!(
                "matmul_transpose: {}x{} * ({}x{})ᵀ",
                self.rows, self.cols, b.rows, b.cols
            )));
        }
        let mut out = DenseMatrix::zeros(self.rows, b.rows);
        out.data
            .par_chunks_mut(b.rows)
            .enumerate()
            .for_each(|(r, out_row)| {
                let a_row = self.row(r);
                for (j, o) in out_row.iter_mut().enumerate() {
                    let b_row = b.row(j);
                    *o = a_row.iter().zip(b_row).map(|(&x, &y)| x * y).sum();
                }
            });
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
