//! Dense column-major matrices and the handful of products the solver needs.
//!
//! Every product computes each output entry with a fixed, sequential
//! accumulation loop. Work is split across rayon workers by output column
//! only, so results are bitwise identical for any worker count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Prng;

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 16;

/// Dense `rows × cols` matrix of `f64`, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Wraps column-major storage.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from row-major (C-order) storage.
    pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidInput(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self::from_fn(rows, cols, |i, j| data[i * cols + j]))
    }

    /// Builds a matrix whose columns are the given slices.
    pub fn from_columns(rows: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * columns.len());
        for (j, c) in columns.iter().enumerate() {
            if c.len() != rows {
                return Err(Error::InvalidInput(format!(
                    "column {j} has {} entries, expected {rows}",
                    c.len()
                )));
            }
            data.extend_from_slice(c);
        }
        Ok(Self {
            rows,
            cols: columns.len(),
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[j * self.rows + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[j * self.rows + i] = value;
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    // chunks_exact(0) panics; a zero-row matrix has no data to chunk anyway
    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows.max(1))
    }

    pub fn columns_mut(&mut self) -> impl Iterator<Item = &mut [f64]> {
        self.data.chunks_exact_mut(self.rows.max(1))
    }

    /// Column-major storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Row-major (C-order) copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(self.get(i, j));
            }
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Copy with columns reordered so that column `j` of the result is
    /// column `order[j]` of `self`.
    pub fn select_columns(&self, order: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * order.len());
        for &j in order {
            data.extend_from_slice(self.col(j));
        }
        Matrix {
            rows: self.rows,
            cols: order.len(),
            data,
        }
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.cols).map(|j| self.get(i, j)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// `self - other`.
    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.check_same_shape(other, "sub")?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> Result<f64> {
        self.check_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub(crate) fn check_same_shape(&self, other: &Matrix, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }
}

fn for_each_output_column(
    out: &mut Matrix,
    work: usize,
    f: impl Fn(usize, &mut [f64]) + Sync + Send,
) {
    let rows = out.rows;
    if rows == 0 || out.cols == 0 {
        return;
    }
    if work >= PAR_THRESHOLD {
        out.data
            .par_chunks_exact_mut(rows)
            .enumerate()
            .for_each(|(j, c)| f(j, c));
    } else {
        out.data
            .chunks_exact_mut(rows)
            .enumerate()
            .for_each(|(j, c)| f(j, c));
    }
}

/// Dense product `a · b`.
pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul",
            left: a.shape(),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for_each_output_column(&mut out, a.rows * a.cols * b.cols, |j, c| {
        // c = Σ_k b[k, j] · a[:, k], k ascending
        for (k, &w) in b.col(j).iter().enumerate() {
            for (ci, ai) in c.iter_mut().zip(a.col(k)) {
                *ci += w * ai;
            }
        }
    });
    Ok(out)
}

/// Dense product `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::DimensionMismatch {
            op: "matmul_tn",
            left: (a.cols, a.rows),
            right: b.shape(),
        });
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for_each_output_column(&mut out, a.rows * a.cols * b.cols, |j, c| {
        let bj = b.col(j);
        for (i, ci) in c.iter_mut().enumerate() {
            *ci = dot(a.col(i), bj);
        }
    });
    Ok(out)
}

/// Dense product `a · bᵀ`.
pub fn matmul_nt(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::DimensionMismatch {
            op: "matmul_nt",
            left: a.shape(),
            right: (b.cols, b.rows),
        });
    }
    matmul(a, &b.transpose())
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

fn mat_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows];
    for (k, &w) in v.iter().enumerate() {
        for (o, mk) in out.iter_mut().zip(m.col(k)) {
            *o += w * mk;
        }
    }
    out
}

fn mat_t_vec(m: &Matrix, v: &[f64]) -> Vec<f64> {
    m.columns().map(|c| dot(c, v)).collect()
}

pub const SPECTRAL_NORM_TOL: f64 = 1e-6;
pub const SPECTRAL_NORM_MAX_ITERS: usize = 1000;

/// Largest singular value of `m` by power iteration on `mᵀm`.
///
/// Starts from the normalized all-ones vector (falling back to a seeded
/// random vector if that lies in the null space). Stops once the residual
/// `‖mᵀm v − λ v‖` of the Rayleigh quotient `λ` drops below `tol · λ`,
/// which bounds the relative error of `σ = √λ` by `tol / 2`.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !m.is_finite() {
        return Err(Error::NonFinite("spectral_norm input".into()));
    }
    let n = m.cols;
    if n == 0 || m.rows == 0 {
        return Ok(0.0);
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut gram_v = mat_t_vec(m, &mat_vec(m, &v));
    if norm2(&gram_v) == 0.0 {
        let mut rng = Prng::new(0);
        for x in v.iter_mut() {
            *x = rng.next_unit() - 0.5;
        }
        let s = norm2(&v);
        v.iter_mut().for_each(|x| *x /= s);
        gram_v = mat_t_vec(m, &mat_vec(m, &v));
        if norm2(&gram_v) == 0.0 {
            return Ok(0.0);
        }
    }

    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let lambda = dot(&v, &gram_v);
        estimate = lambda.max(0.0).sqrt();
        let residual = gram_v
            .iter()
            .zip(&v)
            .map(|(g, x)| (g - lambda * x).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * lambda {
            return Ok(estimate);
        }
        let s = norm2(&gram_v);
        if s == 0.0 {
            return Ok(0.0);
        }
        for (x, g) in v.iter_mut().zip(&gram_v) {
            *x = g / s;
        }
        gram_v = mat_t_vec(m, &mat_vec(m, &v));
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        estimate,
    })
}
