//! Dense row-major matrices and the symmetric positive definite machinery
//! the dependence measures need: Cholesky factorization, multi right-hand-side
//! solves, and a pivoted (rank-revealing) partial Cholesky for low-rank Grams.

use std::ops::{Index, IndexMut};

use serde::Serialize;

use crate::error::NumericError;
use crate::scalar::{axpy, dot, Scalar};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Builds a matrix from row-major data. Panics if the length does not match.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data has wrong length");
        Self { rows, cols, data }
    }

    #[inline]
    pub fn nrows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn trace(&self) -> T {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Sum of elementwise products, i.e. `tr(A^T B)`; equals `tr(AB)` for symmetric `A`.
    pub fn frobenius_inner(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        dot(&self.data, &other.data)
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != T::zero() {
                    axpy(a, other.row(k), out_row);
                }
            }
        }
        out
    }

    /// `self^T * other` without materializing the transpose.
    pub fn tr_matmul(&self, other: &Self) -> Self {
        assert_eq!(self.rows, other.rows, "row counts differ");
        let mut out = Self::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let b = other.row(k);
            for (i, &a) in self.row(k).iter().enumerate() {
                if a != T::zero() {
                    axpy(a, b, out.row_mut(i));
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, v: &[T]) -> Vec<T> {
        assert_eq!(self.cols, v.len());
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// Largest absolute asymmetry `|A[i,j] - A[j,i]|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols.min(self.rows) {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn add_diagonal(&mut self, shift: T) {
        for i in 0..self.rows.min(self.cols) {
            self[(i, i)] += shift;
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Column block width used by the multi right-hand-side triangular solves.
const SOLVE_BLOCK: usize = 64;

/// Cholesky factor `A = L L^T` of a symmetric positive definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    /// Lower triangle, row-major.
    lower: Matrix<T>,
    /// `L^T` kept alongside so the backward sweep reads contiguous rows.
    upper: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    /// Factorizes `a`, reading only its lower triangle.
    pub fn factor(a: &Matrix<T>) -> Result<Self, NumericError> {
        if !a.is_square() {
            return Err(NumericError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let n = a.nrows();
        let mut l = Matrix::<T>::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let (li, lj) = if i == j {
                    let r = l.row(i);
                    (&r[..j], &r[..j])
                } else {
                    // rows i and j are disjoint, split the borrow by index
                    let (head, tail) = l.data.split_at(i * n);
                    (&tail[..j], &head[j * n..j * n + j])
                };
                let s = a[(i, j)] - dot(li, lj);
                if i == j {
                    if !(s > T::zero()) || !s.is_finite() {
                        return Err(NumericError::NotPositiveDefinite {
                            pivot: i,
                            value: s.to_f64_lossy(),
                        });
                    }
                    l[(i, i)] = s.sqrt();
                } else {
                    l[(i, j)] = s / l[(j, j)];
                }
            }
        }
        let upper = l.transpose();
        Ok(Self { lower: l, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    /// `log det A = 2 * sum log L[i,i]`
    pub fn log_det(&self) -> T {
        let two = T::one() + T::one();
        two * (0..self.dim()).map(|i| self.lower[(i, i)].ln()).sum::<T>()
    }

    /// Solves `A X = B` in place for every column of `B`.
    pub fn solve_in_place(&self, b: &mut Matrix<T>) {
        let n = self.dim();
        assert_eq!(b.nrows(), n, "right-hand side has wrong row count");
        let m = b.ncols();
        let mut start = 0;
        while start < m {
            let end = (start + SOLVE_BLOCK).min(m);
            self.solve_block(b, start, end);
            start = end;
        }
    }

    fn solve_block(&self, b: &mut Matrix<T>, c0: usize, c1: usize) {
        let n = self.dim();
        let w = c1 - c0;
        // gather the column block into a contiguous scratch buffer
        let mut x = vec![T::zero(); n * w];
        for i in 0..n {
            x[i * w..(i + 1) * w].copy_from_slice(&b.row(i)[c0..c1]);
        }
        // forward: L Y = B
        for i in 0..n {
            let li = self.lower.row(i);
            let (done, rest) = x.split_at_mut(i * w);
            let xi = &mut rest[..w];
            for (k, &lik) in li[..i].iter().enumerate() {
                if lik != T::zero() {
                    axpy(-lik, &done[k * w..(k + 1) * w], xi);
                }
            }
            let inv = T::one() / li[i];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
        // backward: L^T X = Y
        for i in (0..n).rev() {
            let ui = self.upper.row(i);
            let (head, done) = x.split_at_mut((i + 1) * w);
            let xi = &mut head[i * w..];
            for k in (i + 1)..n {
                let uik = ui[k];
                if uik != T::zero() {
                    let off = (k - i - 1) * w;
                    axpy(-uik, &done[off..off + w], xi);
                }
            }
            let inv = T::one() / ui[i];
            xi.iter_mut().for_each(|v| *v *= inv);
        }
        for i in 0..n {
            b.row_mut(i)[c0..c1].copy_from_slice(&x[i * w..(i + 1) * w]);
        }
    }

    pub fn solve_vec(&self, rhs: &[T]) -> Vec<T> {
        let mut b = Matrix::from_row_major(rhs.len(), 1, rhs.to_vec());
        self.solve_in_place(&mut b);
        b.data
    }
}

/// Low-rank factor `K ≈ F F^T` produced by [`pivoted_cholesky`], stored column-wise.
#[derive(Debug, Clone)]
pub struct LowRankFactor<T> {
    pub n: usize,
    /// Each entry is one length-`n` column of `F`.
    pub columns: Vec<Vec<T>>,
    /// Trace of the neglected residual `K - F F^T`.
    pub residual_trace: T,
    /// False when the rank cap stopped the factorization before the tolerance was met.
    pub converged: bool,
}

impl<T: Scalar> LowRankFactor<T> {
    pub fn rank(&self) -> usize {
        self.columns.len()
    }
}

/// Greedy pivoted partial Cholesky of a PSD matrix given implicitly by its
/// diagonal and a column oracle. Stops once the residual trace drops to
/// `trace_tol` (or every residual diagonal entry is below `entry_tol`), or
/// when `max_rank` columns have been produced.
pub fn pivoted_cholesky<T: Scalar>(
    diag: Vec<T>,
    mut column: impl FnMut(usize, &mut [T]),
    trace_tol: T,
    entry_tol: T,
    max_rank: usize,
) -> LowRankFactor<T> {
    let n = diag.len();
    let mut d = diag;
    let mut columns: Vec<Vec<T>> = Vec::new();
    let mut scratch = vec![T::zero(); n];
    loop {
        let residual: T = d.iter().copied().sum();
        let (pivot, &dmax) = match d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        {
            Some(p) => p,
            None => {
                return LowRankFactor {
                    n,
                    columns,
                    residual_trace: T::zero(),
                    converged: true,
                }
            }
        };
        if residual <= trace_tol || dmax <= entry_tol {
            return LowRankFactor {
                n,
                columns,
                residual_trace: residual.max(T::zero()),
                converged: true,
            };
        }
        if columns.len() >= max_rank {
            return LowRankFactor {
                n,
                columns,
                residual_trace: residual,
                converged: false,
            };
        }
        column(pivot, &mut scratch);
        let mut col = scratch.clone();
        for f in &columns {
            axpy(-f[pivot], f, &mut col);
        }
        let inv = T::one() / dmax.sqrt();
        col.iter_mut().for_each(|v| *v *= inv);
        for (di, &ci) in d.iter_mut().zip(&col) {
            *di = (*di - ci * ci).max(T::zero());
        }
        d[pivot] = T::zero();
        columns.push(col);
    }
}
