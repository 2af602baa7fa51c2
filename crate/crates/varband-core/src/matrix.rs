//! Dense row-major `f64` matrix.
//!
//! This is deliberately minimal: the cells in [`crate::nn`] only need
//! matrix-vector products, transpose products, and rank-one accumulation.
//! Shape violations in these low-level routines are programming errors and
//! panic; fallible construction from untrusted data goes through
//! [`Matrix::from_vec`].

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MatrixError {
    #[error("matrix data length {got} does not match {rows}x{cols}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        got: usize,
    },
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, MatrixError> {
        if data.len() != rows * cols {
            return Err(MatrixError::ShapeMismatch {
                rows,
                cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Copies column `c` into `out`, resizing it to the row count.
    pub fn copy_col(&self, c: usize, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.rows).map(|r| self.data[r * self.cols + c]));
    }

    /// `out = self * x`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols, "matvec input length");
        assert_eq!(out.len(), self.rows, "matvec output length");
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (a, b) in row.iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    /// `out += self^T * g`.
    pub fn matvec_transpose_add(&self, g: &[f64], out: &mut [f64]) {
        assert_eq!(g.len(), self.rows, "transpose input length");
        assert_eq!(out.len(), self.cols, "transpose output length");
        for (r, gi) in g.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }

    /// Rank-one update `self += g * x^T` (gradient accumulation).
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        assert_eq!(g.len(), self.rows, "outer row length");
        assert_eq!(x.len(), self.cols, "outer col length");
        for (r, gi) in g.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (o, xi) in row.iter_mut().zip(x) {
                *o += gi * xi;
            }
        }
    }
}
