//! Compressed sparse row matrices used for fixed linear operators
//! (resampling weights, view factors).

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds from a row-major dense matrix, dropping exact zeros.
    pub fn from_dense(rows: usize, cols: usize, dense: &[f64]) -> Self {
        assert_eq!(dense.len(), rows * cols);
        let mut b = CsrBuilder::new(cols);
        for r in 0..rows {
            for (c, &v) in dense[r * cols..(r + 1) * cols].iter().enumerate() {
                if v != 0.0 {
                    b.push(c, v);
                }
            }
            b.end_row();
        }
        b.finish()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(cc, _)| cc == c).map_or(0.0, |(_, v)| v)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[r * self.cols + c] = v;
            }
        }
        out
    }

    /// `out = A x`, accumulating each row left to right.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "spmv dimension mismatch");
        let mut out = Vec::with_capacity(self.rows);
        for r in 0..self.rows {
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            let mut acc = 0.0;
            for (c, v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                acc += v * x[*c];
            }
            out.push(acc);
        }
        out
    }

    /// `out += Aᵀ y`.
    pub fn mul_transpose_acc(&self, y: &[f64], out: &mut [f64]) {
        assert_eq!(y.len(), self.rows);
        assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let yr = y[r];
            if yr == 0.0 {
                continue;
            }
            let span = self.row_ptr[r]..self.row_ptr[r + 1];
            for (c, v) in self.col_idx[span.clone()].iter().zip(&self.values[span]) {
                out[*c] += v * yr;
            }
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &CsrMatrix) -> CsrMatrix {
        let mut b = CsrBuilder::new(self.cols * other.cols);
        for r1 in 0..self.rows {
            for r2 in 0..other.rows {
                for (c1, v1) in self.row(r1) {
                    for (c2, v2) in other.row(r2) {
                        b.push(c1 * other.cols + c2, v1 * v2);
                    }
                }
                b.end_row();
            }
        }
        b.finish()
    }

    /// Block-diagonal stacking.
    pub fn block_diag(blocks: &[&CsrMatrix]) -> CsrMatrix {
        let cols: usize = blocks.iter().map(|b| b.cols).sum();
        let mut b = CsrBuilder::new(cols);
        let mut c0 = 0;
        for blk in blocks {
            for r in 0..blk.rows {
                for (c, v) in blk.row(r) {
                    b.push(c0 + c, v);
                }
                b.end_row();
            }
            c0 += blk.cols;
        }
        b.finish()
    }
}

/// Row-by-row CSR assembly.
#[derive(Debug)]
pub struct CsrBuilder {
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrBuilder {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.cols);
        self.col_idx.push(col);
        self.values.push(value);
    }

    pub fn end_row(&mut self) {
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn finish(self) -> CsrMatrix {
        CsrMatrix {
            rows: self.row_ptr.len() - 1,
            cols: self.cols,
            row_ptr: self.row_ptr,
            col_idx: self.col_idx,
            values: self.values,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_matches_dense_definition() {
        let a = CsrMatrix::from_dense(2, 2, &[1.0, 2.0, 0.0, 3.0]);
        let b = CsrMatrix::from_dense(1, 2, &[4.0, 5.0]);
        let k = a.kron(&b);
        assert_eq!((k.rows(), k.cols()), (2, 4));
        assert_eq!(k.to_dense(), vec![4.0, 5.0, 8.0, 10.0, 0.0, 0.0, 12.0, 15.0]);
    }

    #[test]
    fn transpose_product_is_adjoint() {
        let a = CsrMatrix::from_dense(2, 3, &[1.0, 0.0, 2.0, 0.0, 3.0, 4.0]);
        let x = [1.0, -1.0, 0.5];
        let y = [2.0, 3.0];
        let ax = a.mul_vec(&x);
        let mut aty = vec![0.0; 3];
        a.mul_transpose_acc(&y, &mut aty);
        let lhs: f64 = ax.iter().zip(&y).map(|(p, q)| p * q).sum();
        let rhs: f64 = aty.iter().zip(&x).map(|(p, q)| p * q).sum();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn block_diag_offsets_columns() {
        let i = CsrMatrix::identity(2);
        let b = CsrMatrix::from_dense(1, 1, &[7.0]);
        let d = CsrMatrix::block_diag(&[&i, &b]);
        assert_eq!(d.mul_vec(&[1.0, 2.0, 3.0]), vec![1.0, 2.0, 21.0]);
    }
}
