//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use alloc::vec;
use alloc::vec::Vec;

use super::{LinalgError, Matrix};
use crate::math;

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-6;

/// All eigenpairs of a symmetric matrix, values in nonincreasing order.
/// `vectors` is row-major `n × n`; column `j` pairs with `values[j]`.
#[derive(Clone, Debug)]
pub struct SymEig {
    pub n: usize,
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymEig {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.vectors[i * self.n + j]).collect()
    }
}

/// Top-`k` eigenpairs; `vectors` is `n × k`, one eigenvector per column.
#[derive(Clone, Debug)]
pub struct TopEig {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

pub fn sym_eig_top(m: &Matrix, k: usize) -> Result<TopEig, LinalgError> {
    if m.rows() != m.cols() {
        return Err(LinalgError::NotSquare { shape: m.shape() });
    }
    let n = m.rows();
    if k == 0 || k > n {
        return Err(LinalgError::RankOutOfRange { k, dim: n });
    }
    let full = sym_eig_f64(n, &m.to_f64())?;
    let mut vecs = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            vecs[i * k + j] = full.vectors[i * n + j];
        }
    }
    Ok(TopEig {
        values: full.values[..k].to_vec(),
        vectors: Matrix::from_f64(n, k, &vecs),
    })
}

/// Full decomposition of a row-major symmetric `n × n` buffer.
///
/// Symmetry is checked against `1e-6 · max(1, max |m_ij|)`; the strictly
/// symmetric part `(m + mᵀ)/2` is what gets decomposed.
pub fn sym_eig_f64(n: usize, data: &[f64]) -> Result<SymEig, LinalgError> {
    if n == 0 {
        return Err(LinalgError::EmptyShape { rows: 0, cols: 0 });
    }
    if data.len() != n * n {
        return Err(LinalgError::DataLength { rows: n, cols: n, len: data.len() });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { index });
    }
    let scale = data.iter().fold(1.0f64, |m, v| m.max(math::abs(*v)));
    let mut asym = 0.0f64;
    for i in 0..n {
        for j in i + 1..n {
            asym = asym.max(math::abs(data[i * n + j] - data[j * n + i]));
        }
    }
    if asym > SYMMETRY_TOL * scale {
        return Err(LinalgError::NotSymmetric { max_asymmetry: asym });
    }

    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (data[i * n + j] + data[j * n + i]);
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let total: f64 = a.iter().map(|x| x * x).sum();
    let target = 1e-30 * total;
    let mut sweeps = 0;
    loop {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off <= target || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NotConverged {
                sweeps,
                residual: math::sqrt(off),
            });
        }
        sweeps += 1;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + math::sqrt(1.0 + theta * theta))
                } else {
                    -1.0 / (-theta + math::sqrt(1.0 + theta * theta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = t * c;
                // A <- Jᵀ A J
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| diag[y].total_cmp(&diag[x]).then(x.cmp(&y)));
    let mut vectors = vec![0.0; n * n];
    for (slot, &j) in order.iter().enumerate() {
        // Sign convention: largest-magnitude component positive.
        let mut pivot = 0;
        for i in 0..n {
            if math::abs(v[i * n + j]) > math::abs(v[pivot * n + j]) {
                pivot = i;
            }
        }
        let sign = if v[pivot * n + j] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[i * n + slot] = sign * v[i * n + j];
        }
    }
    Ok(SymEig {
        n,
        values: order.iter().map(|&j| diag[j]).collect(),
        vectors,
    })
}
