//! Small dense linear algebra for the low-dimensional Gaussian problems.
//!
//! Everything here is O(d^3) with d <= 64, so plain row-major storage and
//! textbook algorithms (Cholesky, cyclic Jacobi) are adequate.

use std::ops::{Index, IndexMut};

use crate::error::{BridgeError, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
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
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(BridgeError::DimensionMismatch {
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
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

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> T {
        self.diag().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(k, j)];
                }
            }
        }
        out
    }

    /// `alpha * self + beta * other`
    pub fn lincomb(&self, alpha: T, other: &Self, beta: T) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| alpha * a + beta * b)
                .collect(),
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&a| alpha * a).collect(),
        }
    }

    /// Adds `v` to every diagonal entry.
    pub fn add_diagonal(&self, v: T) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows.min(self.cols) {
            m[(i, i)] = m[(i, i)] + v;
        }
        m
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    /// Largest absolute entry of `self - self^T`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in 0..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    /// Symmetrized copy `(A + A^T) / 2`.
    pub fn symmetrized(&self) -> Self {
        let half = T::lit(0.5);
        self.lincomb(half, &self.transpose(), half)
    }

    pub fn cholesky(&self) -> Result<Cholesky<T>> {
        Cholesky::factor(self)
    }

    /// Solves the square system `A x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>> {
        if !self.is_square() || b.len() != self.rows {
            return Err(BridgeError::DimensionMismatch {
                expected: self.rows,
                got: if self.is_square() { b.len() } else { self.cols },
            });
        }
        let n = self.rows;
        let mut a = self.clone();
        let mut x = b.to_vec();
        let scale = self.max_abs();
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[(i, col)].abs().partial_cmp(&a[(j, col)].abs()).unwrap())
                .unwrap();
            if !(a[(pivot, col)].abs() > scale * T::epsilon()) {
                return Err(BridgeError::SingularCovariance);
            }
            if pivot != col {
                for k in 0..n {
                    let tmp = a[(col, k)];
                    a[(col, k)] = a[(pivot, k)];
                    a[(pivot, k)] = tmp;
                }
                x.swap(col, pivot);
            }
            for i in (col + 1)..n {
                let f = a[(i, col)] / a[(col, col)];
                for k in col..n {
                    a[(i, k)] = a[(i, k)] - f * a[(col, k)];
                }
                x[i] = x[i] - f * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s = s - a[(i, k)] * x[k];
            }
            x[i] = s / a[(i, i)];
        }
        Ok(x)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    pub fn symmetric_eigen(&self) -> Result<SymmetricEigen<T>> {
        SymmetricEigen::compute(self)
    }

    /// Principal square root of a symmetric positive semi-definite matrix.
    ///
    /// Slightly negative eigenvalues from rounding are clamped to zero.
    pub fn psd_sqrt(&self) -> Result<Self> {
        let eig = self.symmetric_eigen()?;
        Ok(eig.map_values(|v| v.max(T::zero()).sqrt()))
    }
}

impl<T> Index<(usize, usize)> for Matrix<T> {
    type Output = T;

    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for Matrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Lower-triangular Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    l: Matrix<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn factor(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(BridgeError::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        let n = a.rows();
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut diag = a[(j, j)];
            for k in 0..j {
                diag = diag - l[(j, k)] * l[(j, k)];
            }
            if !(diag > T::zero()) || !diag.is_finite() {
                return Err(BridgeError::SingularCovariance);
            }
            let ljj = diag.sqrt();
            l[(j, j)] = ljj;
            for i in (j + 1)..n {
                let mut s = a[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / ljj;
            }
        }
        Ok(Self { l })
    }

    pub fn factor_matrix(&self) -> &Matrix<T> {
        &self.l
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s = s - self.l[(i, k)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s = s - self.l[(k, i)] * y[k];
            }
            y[i] = s / self.l[(i, i)];
        }
        y
    }

    pub fn log_det(&self) -> T {
        let two = T::lit(2.0);
        self.l.diag().into_iter().map(|v| two * v.ln()).sum()
    }

    pub fn inverse(&self) -> Matrix<T> {
        let n = self.l.rows();
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv
    }
}

/// `A = V diag(values) V^T` with orthonormal columns in `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen<T> {
    pub values: Vec<T>,
    pub vectors: Matrix<T>,
}

impl<T: Scalar> SymmetricEigen<T> {
    pub fn compute(a: &Matrix<T>) -> Result<Self> {
        if !a.is_square() {
            return Err(BridgeError::DimensionMismatch {
                expected: a.rows(),
                got: a.cols(),
            });
        }
        let n = a.rows();
        let mut m = a.symmetrized();
        let mut v = Matrix::identity(n);
        let scale = m.max_abs().max(T::min_positive_value());
        let tol = T::epsilon() * scale;

        for _sweep in 0..100 {
            let mut off = T::zero();
            for i in 0..n {
                for j in (i + 1)..n {
                    off = off.max(m[(i, j)].abs());
                }
            }
            if off <= tol {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[(p, q)];
                    if apq.abs() <= tol * T::lit(1e-3) {
                        continue;
                    }
                    let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    let t = sign / (theta.abs() + (theta * theta + T::one()).sqrt());
                    let c = T::one() / (t * t + T::one()).sqrt();
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
        Ok(Self {
            values: m.diag(),
            vectors: v,
        })
    }

    /// `V diag(f(values)) V^T`
    pub fn map_values(&self, f: impl Fn(T) -> T) -> Matrix<T> {
        let n = self.values.len();
        let fv: Vec<T> = self.values.iter().map(|&x| f(x)).collect();
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let mut s = T::zero();
                for k in 0..n {
                    s = s + self.vectors[(i, k)] * fv[k] * self.vectors[(j, k)];
                }
                out[(i, j)] = s;
            }
        }
        out
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }
}
