//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use alloc::vec;
use alloc::vec::Vec;

use super::{LinalgError, Matrix};
use crate::math;

#[derive(Clone, Copy, Debug)]
pub struct SvdConfig {
    /// Maximum number of full rotation sweeps.
    pub max_sweeps: usize,
    /// A column pair counts as orthogonal once |<a_p, a_q>| <= tol * |a_p| |a_q|.
    pub tol: f64,
}

impl Default for SvdConfig {
    fn default() -> Self {
        Self {
            max_sweeps: 100,
            tol: 1e-10,
        }
    }
}

/// `m = u · diag(s) · vᵀ` with `p = min(rows, cols)` columns in `u` and `v`.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub v: Matrix,
}

/// Same decomposition kept in `f64`, row-major: `u` is `rows × p`, `v` is `cols × p`.
#[derive(Clone, Debug)]
pub struct SvdF64 {
    pub rows: usize,
    pub cols: usize,
    pub u: Vec<f64>,
    pub s: Vec<f64>,
    pub v: Vec<f64>,
}

impl SvdF64 {
    pub fn rank_count(&self) -> usize {
        self.s.len()
    }

    /// Row-major `rows × cols` reconstruction from the leading `r` triplets.
    pub fn reconstruct(&self, r: usize) -> Vec<f64> {
        let p = self.s.len();
        let r = r.min(p);
        let mut out = vec![0.0; self.rows * self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                let mut acc = 0.0;
                for t in 0..r {
                    acc += self.u[i * p + t] * self.s[t] * self.v[j * p + t];
                }
                out[i * self.cols + j] = acc;
            }
        }
        out
    }
}

pub fn svd(m: &Matrix) -> Result<Svd, LinalgError> {
    svd_with(m, SvdConfig::default())
}

pub fn svd_with(m: &Matrix, cfg: SvdConfig) -> Result<Svd, LinalgError> {
    let f = svd_f64(m.rows(), m.cols(), &m.to_f64(), cfg)?;
    let p = f.s.len();
    Ok(Svd {
        u: Matrix::from_f64(f.rows, p, &f.u),
        v: Matrix::from_f64(f.cols, p, &f.v),
        s: f.s,
    })
}

pub fn svd_f64(rows: usize, cols: usize, data: &[f64], cfg: SvdConfig) -> Result<SvdF64, LinalgError> {
    if rows == 0 || cols == 0 {
        return Err(LinalgError::EmptyShape { rows, cols });
    }
    if data.len() != rows * cols {
        return Err(LinalgError::DataLength { rows, cols, len: data.len() });
    }
    if let Some(index) = data.iter().position(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite { index });
    }
    if rows >= cols {
        tall_svd(rows, cols, data, cfg)
    } else {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = data[i * cols + j];
            }
        }
        let f = tall_svd(cols, rows, &t, cfg)?;
        Ok(SvdF64 {
            rows,
            cols,
            u: f.v,
            s: f.s,
            v: f.u,
        })
    }
}

/// rows >= cols.
fn tall_svd(rows: usize, cols: usize, data: &[f64], cfg: SvdConfig) -> Result<SvdF64, LinalgError> {
    let n = cols;
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..rows).map(|i| data[i * cols + j]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    let mut residual = 0.0f64;
    let mut sweeps = 0;
    while !converged && sweeps < cfg.max_sweeps {
        sweeps += 1;
        converged = true;
        residual = 0.0;
        for p in 0..n - 1 {
            for q in p + 1..n {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[q], &a[q]);
                let gamma = dot(&a[p], &a[q]);
                if alpha == 0.0 || beta == 0.0 || gamma == 0.0 {
                    continue;
                }
                let off = math::abs(gamma) / math::sqrt(alpha * beta);
                residual = residual.max(off);
                if off <= cfg.tol {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (math::abs(zeta) + math::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
    }
    if !converged {
        return Err(LinalgError::NotConverged { sweeps, residual });
    }

    let norms: Vec<f64> = a.iter().map(|col| math::sqrt(dot(col, col))).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        if norms[j] > 0.0 {
            u_cols.push(a[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            missing.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &missing, rows);

    let mut u = vec![0.0; rows * n];
    let mut vv = vec![0.0; n * n];
    let mut s = Vec::with_capacity(n);
    for (slot, &j) in order.iter().enumerate() {
        s.push(norms[j]);
        for i in 0..rows {
            u[i * n + slot] = u_cols[slot][i];
        }
        for i in 0..n {
            vv[i * n + slot] = v[j][i];
        }
    }
    Ok(SvdF64 {
        rows,
        cols,
        u,
        s,
        v: vv,
    })
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = *x;
        let yq = *y;
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the zero columns listed in `missing` with unit vectors orthogonal to
/// every other column, drawing candidates from the standard basis.
pub(crate) fn complete_orthonormal(cols: &mut [Vec<f64>], missing: &[usize], dim: usize) {
    let mut basis = 0;
    for &slot in missing {
        while basis < dim {
            let mut cand = vec![0.0; dim];
            cand[basis] = 1.0;
            basis += 1;
            // Two passes of Gram-Schmidt.
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || (missing.contains(&k) && dot(col, col) == 0.0) {
                        continue;
                    }
                    let proj = dot(&cand, col);
                    for (c, x) in cand.iter_mut().zip(col) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = math::sqrt(dot(&cand, &cand));
            if norm > 0.5 {
                cols[slot] = cand.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}
