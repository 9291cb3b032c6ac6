//! Minimal dense linear algebra for the loss computations.
//!
//! Matrices are stored row-major. Everything here is sized for small
//! embedding dimensions (p <= 64); there is no BLAS, no sparsity and no
//! pivoting beyond the positive-definiteness check in the Cholesky
//! factorization. All operations are pure functions of their inputs.

use crate::error::{Error, Result};

/// Pivots at or below this threshold fail the factorization.
const CHOLESKY_PIVOT_MIN: f64 = 1e-14;

/// Dense row-major matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "all rows must share a length");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = value;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, delta: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] += delta;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                context: "matrix addition",
                expected: self.rows * self.cols,
                found: other.rows * other.cols,
            });
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= factor;
        }
        out
    }

    /// Adds `eps` to every diagonal entry.
    pub fn add_ridge(&self, eps: f64) -> Self {
        let mut out = self.clone();
        let n = self.rows.min(self.cols);
        for i in 0..n {
            out.data[i * self.cols + i] += eps;
        }
        out
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matrix product",
                expected: self.cols,
                found: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch {
                context: "matrix-vector product",
                expected: self.cols,
                found: v.len(),
            });
        }
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let mut sum = 0.0;
            for j in 0..self.cols {
                sum += self.get(i, j) * v[j];
            }
            out[i] = sum;
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lower-triangular Cholesky factor L with A = L L^T.
///
/// Fails with `NotPositiveDefinite` when a pivot drops to 1e-14 or below;
/// the caller is expected to retry with a larger ridge.
pub fn cholesky_factor(a: &Matrix) -> Result<Matrix> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "cholesky of non-square matrix",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= CHOLESKY_PIVOT_MIN {
                    return Err(Error::NotPositiveDefinite { row: i, pivot: sum });
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

/// Inverse of `a + eps*I` via Cholesky, materialized as a symmetric matrix.
pub fn ridge_inverse(a: &Matrix, eps: f64) -> Result<Matrix> {
    let n = a.rows();
    let l = cholesky_factor(&a.add_ridge(eps))?;
    // Solve L L^T X = I one basis column at a time.
    let mut inv = Matrix::zeros(n, n);
    let mut y = vec![0.0; n];
    for col in 0..n {
        // forward: L y = e_col
        for i in 0..n {
            let mut sum = if i == col { 1.0 } else { 0.0 };
            for k in 0..i {
                sum -= l.get(i, k) * y[k];
            }
            y[i] = sum / l.get(i, i);
        }
        // backward: L^T x = y, written straight into the column
        for i in (0..n).rev() {
            let mut sum = y[i];
            for k in (i + 1)..n {
                sum -= l.get(k, i) * inv.get(k, col);
            }
            inv.set(i, col, sum / l.get(i, i));
        }
    }
    // The solve is symmetric up to rounding; make it exact.
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (inv.get(i, j) + inv.get(j, i));
            inv.set(i, j, s);
            inv.set(j, i, s);
        }
    }
    Ok(inv)
}

/// v^T A v.
pub fn quadratic_form(v: &[f64], a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "quadratic form on non-square matrix",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    if v.len() != a.rows() {
        return Err(Error::DimensionMismatch {
            context: "quadratic form vector length",
            expected: a.rows(),
            found: v.len(),
        });
    }
    let av = a.mul_vec(v)?;
    Ok(dot(v, &av))
}

/// Sum of the diagonal.
pub fn trace(a: &Matrix) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            context: "trace of non-square matrix",
            expected: a.rows(),
            found: a.cols(),
        });
    }
    Ok((0..a.rows()).map(|i| a.get(i, i)).sum())
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// a += factor * b
pub fn axpy(a: &mut [f64], factor: f64, b: &[f64]) {
    debug_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter_mut().zip(b) {
        *x += factor * y;
    }
}
