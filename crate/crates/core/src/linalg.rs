//! Small dense row-major matrices.
//!
//! Parameter dimensions here are tiny (k ≤ 2, p ≤ 32) so everything is
//! plain O(n³) loops.

use std::ops::{Index, IndexMut};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> Matrix<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![S::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = S::one();
        }
        m
    }

    pub fn diag(d: &[S]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds from row slices; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<S>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { what: "matrix row", expected: c, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn to_rows(&self) -> Vec<Vec<S>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn diagonal(&self) -> Vec<S> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn trace(&self) -> S {
        self.diagonal().into_iter().sum()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: S) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| v * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect();
        Ok(Self { rows: self.rows, cols: self.cols, data })
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, other: &Self, c: S) -> Result<()> {
        self.same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + c * b;
        }
        Ok(())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { what: "matmul inner", expected: self.cols, got: other.rows });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == S::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] = out[(i, j)] + a * other[(l, j)];
                }
            }
        }
        Ok(out)
    }

    pub fn matvec(&self, v: &[S]) -> Result<Vec<S>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch { what: "matvec", expected: self.cols, got: v.len() });
        }
        Ok((0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum()).collect())
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[S], y: &[S]) -> Result<S> {
        let ay = self.matvec(y)?;
        if x.len() != ay.len() {
            return Err(Error::DimensionMismatch { what: "bilinear", expected: ay.len(), got: x.len() });
        }
        Ok(x.iter().zip(&ay).map(|(&a, &b)| a * b).sum())
    }

    pub fn frobenius(&self) -> S {
        self.data.iter().map(|&v| v * v).sum::<S>().sqrt()
    }

    pub fn max_abs(&self) -> S {
        self.data.iter().fold(S::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn is_symmetric(&self, tol: S) -> bool {
        self.is_square()
            && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }

    /// Symmetrizes in place: A ← (A + Aᵀ)/2.
    pub fn symmetrize(&mut self) {
        for i in 0..self.rows {
            for j in 0..i {
                let m = (self[(i, j)] + self[(j, i)]) * S::half();
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    /// Lower Cholesky factor L with A = L Lᵀ; fails when A is not positive definite.
    pub fn cholesky(&self) -> Result<Self> {
        self.require_square("cholesky")?;
        let n = self.rows;
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d = d - l[(j, k)] * l[(j, k)];
            }
            if !(d > S::zero()) || !d.is_finite() {
                return Err(Error::SingularMatrix { context: "cholesky", condition: f64::INFINITY });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s = s - l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(l)
    }

    /// Solves A x = b for symmetric positive definite A.
    pub fn solve_spd(&self, b: &[S]) -> Result<Vec<S>> {
        let l = self.cholesky()?;
        let n = self.rows;
        if b.len() != n {
            return Err(Error::DimensionMismatch { what: "solve rhs", expected: n, got: b.len() });
        }
        let mut y = vec![S::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - l[(i, k)] * y[k];
            }
            y[i] = s / l[(i, i)];
        }
        let mut x = vec![S::zero(); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s = s - l[(k, i)] * x[k];
            }
            x[i] = s / l[(i, i)];
        }
        Ok(x)
    }

    /// Inverse via Gauss–Jordan with partial pivoting.
    pub fn inverse(&self) -> Result<Self> {
        self.require_square("inverse")?;
        let n = self.rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        let scale = self.max_abs();
        for col in 0..n {
            let (piv, pmax) = (col..n)
                .map(|r| (r, a[(r, col)].abs()))
                .fold((col, S::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
            if !(pmax > scale * S::epsilon() * S::from_usize_lossy(n)) {
                return Err(Error::SingularMatrix { context: "inverse", condition: f64::INFINITY });
            }
            if piv != col {
                a.swap_rows(piv, col);
                inv.swap_rows(piv, col);
            }
            let d = a[(col, col)];
            for j in 0..n {
                a[(col, j)] = a[(col, j)] / d;
                inv[(col, j)] = inv[(col, j)] / d;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let f = a[(r, col)];
                if f == S::zero() {
                    continue;
                }
                for j in 0..n {
                    a[(r, j)] = a[(r, j)] - f * a[(col, j)];
                    inv[(r, j)] = inv[(r, j)] - f * inv[(col, j)];
                }
            }
        }
        Ok(inv)
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns eigenvalues (ascending) and the matrix of column eigenvectors.
    pub fn symmetric_eigen(&self) -> Result<(Vec<S>, Self)> {
        self.require_square("symmetric_eigen")?;
        let n = self.rows;
        let mut a = self.clone();
        a.symmetrize();
        let mut v = Self::identity(n);
        for _sweep in 0..100 {
            let off: S = (0..n)
                .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[(i, j)] * a[(i, j)])
                .sum();
            let total = a.frobenius();
            if off.sqrt() <= S::epsilon() * total || off == S::zero() {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a[(p, q)];
                    if apq == S::zero() {
                        continue;
                    }
                    let theta = (a[(q, q)] - a[(p, p)]) / (S::two() * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                    let c = (t * t + S::one()).sqrt().recip();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
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
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| a[(i, i)].partial_cmp(&a[(j, j)]).unwrap_or(std::cmp::Ordering::Equal));
        let vals = order.iter().map(|&i| a[(i, i)]).collect();
        let vecs = Self::from_fn(n, n, |r, c| v[(r, order[c])]);
        Ok((vals, vecs))
    }

    /// f(A) = V diag(f(λ)) Vᵀ for symmetric A.
    pub fn symmetric_apply(&self, f: impl Fn(S) -> S) -> Result<Self> {
        let (vals, vecs) = self.symmetric_eigen()?;
        let n = self.rows;
        let fv: Vec<S> = vals.iter().map(|&l| f(l)).collect();
        Ok(Self::from_fn(n, n, |i, j| (0..n).map(|k| vecs[(i, k)] * fv[k] * vecs[(j, k)]).sum()))
    }

    /// Symmetric square root of a positive semidefinite matrix.
    pub fn sqrt_psd(&self) -> Result<Self> {
        self.symmetric_apply(|l| l.max(S::zero()).sqrt())
    }

    /// Symmetric inverse square root A^{-1/2} of a positive definite matrix.
    pub fn inv_sqrt_pd(&self) -> Result<Self> {
        let cond = self.condition_number()?;
        let (vals, _) = self.symmetric_eigen()?;
        if !(vals[0] > S::zero()) {
            return Err(Error::SingularMatrix { context: "inverse square root", condition: cond });
        }
        self.symmetric_apply(|l| l.sqrt().recip())
    }

    /// Spectral condition number of a symmetric matrix (∞ when not PD).
    pub fn condition_number(&self) -> Result<f64> {
        let (vals, _) = self.symmetric_eigen()?;
        let lo = vals.first().copied().unwrap_or(S::zero());
        let hi = vals.last().copied().unwrap_or(S::zero());
        if lo > S::zero() {
            Ok((hi / lo).to_f64_lossy())
        } else {
            Ok(f64::INFINITY)
        }
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(S) -> T) -> Matrix<T> {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn to_f64(&self) -> Matrix<f64> {
        self.map(|v| v.to_f64_lossy())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                what: "matrix shape",
                expected: self.rows * self.cols,
                got: other.rows * other.cols,
            });
        }
        Ok(())
    }

    fn require_square(&self, what: &'static str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, expected: self.rows, got: self.cols })
        }
    }
}

impl<S> Index<(usize, usize)> for Matrix<S> {
    type Output = S;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &S {
        &self.data[i * self.cols + j]
    }
}

impl<S> IndexMut<(usize, usize)> for Matrix<S> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut S {
        &mut self.data[i * self.cols + j]
    }
}

impl<S: Scalar> Serialize for Matrix<S> {
    fn serialize<Ser: serde::Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        let rows: Vec<Vec<f64>> =
            (0..self.rows).map(|i| self.row(i).iter().map(|v| v.to_f64_lossy()).collect()).collect();
        rows.serialize(serializer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Matrix<f64> {
        Matrix::from_rows(&[vec![4.0, 1.0, 0.5], vec![1.0, 3.0, 0.2], vec![0.5, 0.2, 2.0]]).unwrap()
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = spd3();
        let prod = a.matmul(&a.inverse().unwrap()).unwrap();
        assert!(prod.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn cholesky_solve_matches_inverse() {
        let a = spd3();
        let b = [1.0, -2.0, 0.5];
        let x = a.solve_spd(&b).unwrap();
        let y = a.inverse().unwrap().matvec(&b).unwrap();
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn eigen_reconstructs_and_sqrt_squares_back() {
        let a = spd3();
        let r = a.sqrt_psd().unwrap();
        assert!(r.matmul(&r).unwrap().sub(&a).unwrap().max_abs() < 1e-13);
        let s = a.inv_sqrt_pd().unwrap();
        let should_be_id = s.matmul(&a).unwrap().matmul(&s).unwrap();
        assert!(should_be_id.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        assert!(matches!(a.inverse(), Err(Error::SingularMatrix { .. })));
        assert!(a.cholesky().is_err());
        assert!(a.condition_number().unwrap().is_infinite() || a.condition_number().unwrap() > 1e15);
    }
}
