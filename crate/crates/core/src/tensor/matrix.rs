use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::LinalgError;
use crate::math;

/// Dense row-major matrix of `f32` entries.
///
/// Both dimensions are at least one. All arithmetic that reduces over
/// entries accumulates in `f64` and rounds once on the way out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = LinalgError;

    fn try_from(raw: RawMatrix) -> Result<Self, Self::Error> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix {
            rows: m.rows,
            cols: m.cols,
            data: m.data,
        }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, LinalgError> {
        if rows == 0 || cols == 0 {
            return Err(LinalgError::EmptyShape { rows, cols });
        }
        let expected = rows
            .checked_mul(cols)
            .ok_or(LinalgError::DataLength { rows, cols, len: data.len() })?;
        if data.len() != expected {
            return Err(LinalgError::DataLength { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Like [`Matrix::new`] but also rejects NaN and infinite entries.
    /// Used for anything that comes from outside the process.
    pub fn from_finite(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, LinalgError> {
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite { index });
        }
        Self::new(rows, cols, data)
    }

    pub fn from_rows(rows: &[&[f32]]) -> Result<Self, LinalgError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(LinalgError::DataLength {
                    rows: rows.len(),
                    cols,
                    len: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Rounds an `f64` buffer to the `f32` carrier. Panics on a length mismatch.
    pub fn from_f64(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "buffer length does not match shape");
        assert!(rows > 0 && cols > 0, "empty shape");
        Self {
            rows,
            cols,
            data: data.iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty shape");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
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
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.cols + col] = value;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                out.push(self.get(r, c));
            }
        }
        Matrix {
            rows: self.cols,
            cols: self.rows,
            data: out,
        }
    }

    /// Every entry multiplied by `factor`, computed in `f64`.
    pub fn scaled(&self, factor: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|&v| (f64::from(v) * factor) as f32)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.check_same_shape("sub", other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| (f64::from(a) - f64::from(b)) as f32)
                .collect(),
        })
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix, LinalgError> {
        self.check_same_shape("add", other)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| (f64::from(a) + f64::from(b)) as f32)
                .collect(),
        })
    }

    /// Side-by-side concatenation; all parts must share the row count.
    pub fn hcat(parts: &[Matrix]) -> Result<Matrix, LinalgError> {
        let first = parts.first().ok_or(LinalgError::EmptyShape { rows: 0, cols: 0 })?;
        let rows = first.rows;
        let mut cols = 0;
        for p in parts {
            if p.rows != rows {
                return Err(LinalgError::ShapeMismatch {
                    op: "hcat",
                    lhs: first.shape(),
                    rhs: p.shape(),
                });
            }
            cols += p.cols;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(&p.data[r * p.cols..(r + 1) * p.cols]);
            }
        }
        Ok(Matrix { rows, cols, data })
    }

    /// Stacked concatenation; all parts must share the column count.
    pub fn vcat(parts: &[Matrix]) -> Result<Matrix, LinalgError> {
        let first = parts.first().ok_or(LinalgError::EmptyShape { rows: 0, cols: 0 })?;
        let cols = first.cols;
        let mut rows = 0;
        for p in parts {
            if p.cols != cols {
                return Err(LinalgError::ShapeMismatch {
                    op: "vcat",
                    lhs: first.shape(),
                    rhs: p.shape(),
                });
            }
            rows += p.rows;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for p in parts {
            data.extend_from_slice(&p.data);
        }
        Ok(Matrix { rows, cols, data })
    }

    fn check_same_shape(&self, op: &'static str, other: &Matrix) -> Result<(), LinalgError> {
        if self.shape() != other.shape() {
            return Err(LinalgError::ShapeMismatch {
                op,
                lhs: self.shape(),
                rhs: other.shape(),
            });
        }
        Ok(())
    }
}

/// Matrix product with `f64` accumulation.
pub fn matmul(lhs: &Matrix, rhs: &Matrix) -> Result<Matrix, LinalgError> {
    let prod = matmul_f64(lhs, rhs)?;
    Ok(Matrix::from_f64(lhs.rows, rhs.cols, &prod))
}

/// Matrix product kept in `f64` (row-major, `lhs.rows × rhs.cols`).
pub fn matmul_f64(lhs: &Matrix, rhs: &Matrix) -> Result<Vec<f64>, LinalgError> {
    if lhs.cols != rhs.rows {
        return Err(LinalgError::ShapeMismatch {
            op: "matmul",
            lhs: lhs.shape(),
            rhs: rhs.shape(),
        });
    }
    let (n, inner, m) = (lhs.rows, lhs.cols, rhs.cols);
    let mut out = vec![0.0f64; n * m];
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for k in 0..inner {
            let a = f64::from(lhs.data[i * inner + k]);
            if a == 0.0 {
                continue;
            }
            let rrow = &rhs.data[k * m..(k + 1) * m];
            for (o, &b) in row.iter_mut().zip(rrow) {
                *o += a * f64::from(b);
            }
        }
    }
    Ok(out)
}

/// Sum of elementwise products.
pub fn frobenius_inner(a: &Matrix, b: &Matrix) -> Result<f64, LinalgError> {
    a.check_same_shape("frobenius_inner", b)?;
    Ok(a.data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum())
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    math::sqrt(a.data.iter().map(|&x| f64::from(x) * f64::from(x)).sum())
}
