//! Small dense linear algebra: row-major matrices, column-pivoted Householder
//! QR for least squares, Cholesky and a Jacobi symmetric eigensolver.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Relative residual norm below which a column counts as linearly dependent
/// on the columns before it (after scaling every column to unit norm).
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Matrix { nrows, ncols, data: vec![0.0; nrows * ncols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_row_major(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::DimensionMismatch { expected: nrows * ncols, found: data.len() });
        }
        Ok(Matrix { nrows, ncols, data })
    }

    /// Builds an `n × columns.len()` matrix from equal-length columns.
    pub fn from_columns(nrows: usize, columns: &[&[f64]]) -> Result<Self> {
        let ncols = columns.len();
        let mut m = Matrix::zeros(nrows, ncols);
        for (j, c) in columns.iter().enumerate() {
            if c.len() != nrows {
                return Err(Error::DimensionMismatch { expected: nrows, found: c.len() });
            }
            for (i, &v) in c.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.ncols.max(1)).take(self.nrows)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.rows().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for j in 0..self.ncols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.ncols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.ncols + j]
    }
}

/// Householder QR with column pivoting of an equilibrated copy of `A`.
///
/// Columns are scaled to unit Euclidean norm first so the rank decision does
/// not depend on units. The first `fixed_leading` columns are factored in
/// place without pivoting (used to keep an intercept column first).
#[derive(Debug, Clone)]
pub struct PivotedQr {
    nrows: usize,
    ncols: usize,
    /// Column-major working storage: R above the diagonal, reflectors below.
    cols: Vec<Vec<f64>>,
    reflectors: Vec<(Vec<f64>, f64)>,
    rdiag: Vec<f64>,
    scale: Vec<f64>,
    perm: Vec<usize>,
    rank: usize,
}

impl PivotedQr {
    pub fn new(a: &Matrix, fixed_leading: usize) -> Self {
        let (n, m) = (a.nrows, a.ncols);
        let mut cols: Vec<Vec<f64>> = (0..m).map(|j| a.column(j)).collect();
        let scale: Vec<f64> = cols.iter().map(|c| libm::sqrt(c.iter().map(|v| v * v).sum::<f64>())).collect();
        for (c, &s) in cols.iter_mut().zip(&scale) {
            if s > 0.0 {
                c.iter_mut().for_each(|v| *v /= s);
            }
        }
        let mut perm: Vec<usize> = (0..m).collect();
        let mut reflectors = Vec::with_capacity(m.min(n));
        let mut rdiag = vec![0.0; m];
        let steps = m.min(n);
        let mut rank = 0;
        let mut deficient = false;
        for k in 0..steps {
            if k >= fixed_leading {
                // pivot on the largest remaining column norm; first index wins ties
                let mut best = k;
                let mut best_norm = -1.0;
                for (j, col) in cols.iter().enumerate().skip(k) {
                    let norm: f64 = col[k..].iter().map(|v| v * v).sum();
                    if norm > best_norm {
                        best_norm = norm;
                        best = j;
                    }
                }
                cols.swap(k, best);
                perm.swap(k, best);
            }
            let x = &cols[k][k..];
            let norm = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>());
            if norm <= RANK_TOL {
                deficient = true;
            } else if !deficient {
                rank += 1;
            }
            if norm == 0.0 {
                reflectors.push((vec![0.0; n - k], 0.0));
                rdiag[k] = 0.0;
                continue;
            }
            let alpha = if x[0] >= 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = x.to_vec();
            v[0] -= alpha;
            let vtv: f64 = v.iter().map(|a| a * a).sum();
            let beta = if vtv > 0.0 { 2.0 / vtv } else { 0.0 };
            for col in cols.iter_mut().skip(k + 1) {
                let s: f64 = beta * v.iter().zip(&col[k..]).map(|(a, b)| a * b).sum::<f64>();
                for (ci, vi) in col[k..].iter_mut().zip(&v) {
                    *ci -= s * vi;
                }
            }
            cols[k][k] = alpha;
            for v in cols[k][k + 1..].iter_mut() {
                *v = 0.0;
            }
            rdiag[k] = alpha;
            reflectors.push((v, beta));
        }
        PivotedQr { nrows: n, ncols: m, cols, reflectors, rdiag, scale, perm, rank }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank == self.ncols
    }

    /// Original column indices in pivot order.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Original indices of columns beyond the numerical rank.
    pub fn dependent_columns(&self) -> Vec<usize> {
        let mut cols: Vec<usize> = self.perm[self.rank..].to_vec();
        cols.sort_unstable();
        cols
    }

    fn apply_qt(&self, y: &[f64]) -> Vec<f64> {
        let mut qty = y.to_vec();
        for (k, (v, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            let s: f64 = beta * v.iter().zip(&qty[k..]).map(|(a, b)| a * b).sum::<f64>();
            for (q, vi) in qty[k..].iter_mut().zip(v) {
                *q -= s * vi;
            }
        }
        qty
    }

    /// Basic least-squares solution using the leading `rank` pivoted columns;
    /// dependent columns get a zero coefficient.
    pub fn solve_least_squares(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.nrows);
        let qty = self.apply_qt(y);
        let r = self.rank;
        let mut z = vec![0.0; r];
        for i in (0..r).rev() {
            let mut s = qty[i];
            for (j, zj) in z.iter().enumerate().skip(i + 1) {
                s -= self.cols[j][i] * zj;
            }
            z[i] = s / self.rdiag[i];
        }
        let mut beta = vec![0.0; self.ncols];
        for (k, zk) in z.into_iter().enumerate() {
            let j = self.perm[k];
            beta[j] = if self.scale[j] > 0.0 { zk / self.scale[j] } else { 0.0 };
        }
        beta
    }

    /// `(AᵀA)⁻¹` in the original column order. Requires full rank.
    pub fn normal_inverse(&self) -> Result<Matrix> {
        let m = self.ncols;
        if !self.is_full_rank() {
            return Err(Error::InvalidParameter { name: "design", reason: "rank deficient" });
        }
        // Rinv upper-triangular, by back substitution on unit vectors
        let mut rinv = Matrix::zeros(m, m);
        for col in 0..m {
            for i in (0..=col).rev() {
                let mut s = if i == col { 1.0 } else { 0.0 };
                for j in (i + 1)..=col {
                    s -= self.cols[j][i] * rinv[(j, col)];
                }
                rinv[(i, col)] = s / self.rdiag[i];
            }
        }
        let mut out = Matrix::zeros(m, m);
        for a in 0..m {
            for b in a..m {
                let mut s = 0.0;
                for k in b..m {
                    s += rinv[(a, k)] * rinv[(b, k)];
                }
                let (ia, ib) = (self.perm[a], self.perm[b]);
                let v = s / (self.scale[ia] * self.scale[ib]);
                out[(ia, ib)] = v;
                out[(ib, ia)] = v;
            }
        }
        Ok(out)
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
pub fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.nrows;
    let mut l = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[(i, i)] = libm::sqrt(s);
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(l)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and a matrix whose columns are the eigenvectors.
pub fn symmetric_eigen(a: &Matrix) -> (Vec<f64>, Matrix) {
    let n = a.nrows;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let diag: f64 = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off <= 1e-30 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / libm::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| m[(i, i)]).collect(), v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_solves_exact_system() {
        let a = Matrix::from_row_major(4, 2, vec![1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]).unwrap();
        let y = [1.0, 3.0, 5.0, 7.0];
        let qr = PivotedQr::new(&a, 1);
        assert!(qr.is_full_rank());
        let b = qr.solve_least_squares(&y);
        assert!((b[0] - 1.0).abs() < 1e-14 && (b[1] - 2.0).abs() < 1e-14);
        let inv = qr.normal_inverse().unwrap();
        // (AᵀA) = [[4, 6], [6, 14]], inverse = [[0.7, -0.3], [-0.3, 0.2]]
        assert!((inv[(0, 0)] - 0.7).abs() < 1e-14);
        assert!((inv[(0, 1)] + 0.3).abs() < 1e-14);
        assert!((inv[(1, 1)] - 0.2).abs() < 1e-14);
    }

    #[test]
    fn qr_detects_dependent_column() {
        let a =
            Matrix::from_row_major(4, 3, vec![1.0, 1.0, 2.0, 1.0, 2.0, 4.0, 1.0, 3.0, 6.0, 1.0, 5.0, 10.0])
                .unwrap();
        let qr = PivotedQr::new(&a, 1);
        assert_eq!(qr.rank(), 2);
        assert_eq!(qr.dependent_columns().len(), 1);
        assert!(qr.normal_inverse().is_err());
    }

    #[test]
    fn eigen_reconstructs() {
        let a = Matrix::from_row_major(3, 3, vec![4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]).unwrap();
        let (vals, vecs) = symmetric_eigen(&a);
        for i in 0..3 {
            for j in 0..3 {
                let r: f64 = (0..3).map(|k| vecs[(i, k)] * vals[k] * vecs[(j, k)]).sum();
                assert!((r - a[(i, j)]).abs() < 1e-12);
            }
        }
        let l = cholesky(&a).unwrap();
        let r: f64 = (0..3).map(|k| l[(2, k)] * l[(2, k)]).sum();
        assert!((r - 2.0).abs() < 1e-14);
    }
}
