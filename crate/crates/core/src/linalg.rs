//! Small dense matrices, row-major. Everything here is desk-scale
//! (n <= ~20), so plain Gaussian elimination and one-sided Jacobi are enough.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;

#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c);
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.rows {
            let mut acc = 0.0;
            let base = i * self.cols;
            for j in 0..self.cols {
                acc += self.data[base + j] * x[j];
            }
            out[i] = acc;
        }
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows);
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * out.cols + j] += a * other.get(k, j);
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(math::abs(*v)))
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        math::sqrt(self.data.iter().map(|v| v * v).sum())
    }
}

/// Euclidean norm of a slice.
pub fn norm2(x: &[f64]) -> f64 {
    math::sqrt(x.iter().map(|v| v * v).sum())
}

/// Euclidean distance between two slices of equal length.
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for i in 0..a.len() {
        let d = a[i] - b[i];
        acc += d * d;
    }
    math::sqrt(acc)
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for i in 0..y.len() {
        y[i] += alpha * x[i];
    }
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
/// Returns `None` when the matrix is numerically singular.
pub fn solve(a: &Mat, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols);
    assert_eq!(b.len(), a.rows);
    let n = a.rows;
    let mut m = a.data.clone();
    let mut rhs = b.to_vec();
    for col in 0..n {
        let mut piv = col;
        let mut best = math::abs(m[col * n + col]);
        for r in col + 1..n {
            let v = math::abs(m[r * n + col]);
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            rhs.swap(col, piv);
        }
        let d = m[col * n + col];
        for r in col + 1..n {
            let factor = m[r * n + col] / d;
            if factor == 0.0 {
                continue;
            }
            for j in col..n {
                m[r * n + j] -= factor * m[col * n + j];
            }
            rhs[r] -= factor * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut acc = rhs[i];
        for j in i + 1..n {
            acc -= m[i * n + j] * x[j];
        }
        x[i] = acc / m[i * n + i];
    }
    Some(x)
}

/// Per-singular-direction pieces of the least-squares solution of
/// |A x - b|: entry (sigma_j, v_j * (u_j . b) / sigma_j), sorted by
/// descending sigma. Summing all pieces gives the pseudo-inverse solution;
/// partial sums let a caller split a step into stiff and gentle parts.
/// Directions with sigma below `1e-13 * sigma_max` are dropped.
pub fn svd_lstsq_components(a: &Mat, b: &[f64]) -> Vec<(f64, Vec<f64>)> {
    assert_eq!(a.rows, b.len());
    let m = a.rows;
    let n = a.cols;
    let mut u = a.data.clone();
    let mut v = Mat::identity(n);
    let scale = u.iter().fold(0.0f64, |acc, x| acc.max(math::abs(*x)));
    if scale == 0.0 {
        return Vec::new();
    }
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let up = u[i * n + p];
                    let uq = u[i * n + q];
                    app += up * up;
                    aqq += uq * uq;
                    apq += up * uq;
                }
                off = off.max(math::abs(apq) / (math::sqrt(app * aqq) + 1e-300));
                if math::abs(apq) <= 1e-30 * scale * scale {
                    continue;
                }
                let theta = 0.5 * math::atan2(2.0 * apq, app - aqq);
                let (s, c) = math::sincos(theta);
                for i in 0..m {
                    let up = u[i * n + p];
                    let uq = u[i * n + q];
                    u[i * n + p] = c * up + s * uq;
                    u[i * n + q] = -s * up + c * uq;
                }
                for i in 0..n {
                    let vp = v.data[i * n + p];
                    let vq = v.data[i * n + q];
                    v.data[i * n + p] = c * vp + s * vq;
                    v.data[i * n + q] = -s * vp + c * vq;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    // Columns of u are now u_j * sigma_j.
    let mut out: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n);
    let mut sigma = vec![0.0; n];
    for j in 0..n {
        let mut acc = 0.0;
        for i in 0..m {
            acc += u[i * n + j] * u[i * n + j];
        }
        sigma[j] = math::sqrt(acc);
    }
    let smax = sigma.iter().fold(0.0f64, |acc, s| acc.max(*s));
    for j in 0..n {
        if sigma[j] <= 1e-13 * smax {
            continue;
        }
        let mut dot = 0.0;
        for i in 0..m {
            dot += u[i * n + j] * b[i];
        }
        let coeff = dot / (sigma[j] * sigma[j]);
        let piece: Vec<f64> = (0..n).map(|i| v.data[i * n + j] * coeff).collect();
        out.push((sigma[j], piece));
    }
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    out
}

/// Minimizer of |A x - b| through the SVD of A (not the normal equations),
/// so the well-conditioned directions of a stiff Jacobian survive.
pub fn svd_lstsq(a: &Mat, b: &[f64]) -> Vec<f64> {
    let n = a.cols;
    let mut x = vec![0.0; n];
    for (_, piece) in svd_lstsq_components(a, b) {
        for i in 0..n {
            x[i] += piece[i];
        }
    }
    x
}

/// Singular values in descending order via one-sided Jacobi on columns.
/// Exact enough for the tall skinny Jacobians handled here.
pub fn singular_values(a: &Mat) -> Vec<f64> {
    // Work on a copy with rows >= cols.
    let work = if a.rows >= a.cols { a.clone() } else { a.transpose() };
    let m = work.rows;
    let n = work.cols;
    let mut u = work.data;
    let col = |u: &[f64], j: usize, i: usize| u[i * n + j];
    let scale = u.iter().fold(0.0f64, |acc, v| acc.max(math::abs(*v)));
    if scale == 0.0 || n == 0 {
        return vec![0.0; n];
    }
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let up = col(&u, p, i);
                    let uq = col(&u, q, i);
                    app += up * up;
                    aqq += uq * uq;
                    apq += up * uq;
                }
                off = off.max(math::abs(apq) / (math::sqrt(app * aqq) + 1e-300));
                if math::abs(apq) <= 1e-30 * scale * scale {
                    continue;
                }
                let theta = 0.5 * math::atan2(2.0 * apq, app - aqq);
                let (s, c) = math::sincos(theta);
                for i in 0..m {
                    let up = col(&u, p, i);
                    let uq = col(&u, q, i);
                    u[i * n + p] = c * up + s * uq;
                    u[i * n + q] = -s * up + c * uq;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n)
        .map(|j| {
            let mut acc = 0.0;
            for i in 0..m {
                let v = col(&u, j, i);
                acc += v * v;
            }
            math::sqrt(acc)
        })
        .collect();
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma
}

/// (sigma_min, sigma_max, condition number) of a matrix. A zero sigma_min
/// reports infinite conditioning.
pub fn sigma_stats(a: &Mat) -> (f64, f64, f64) {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    let smin = s.last().copied().unwrap_or(0.0);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    (smin, smax, cond)
}
