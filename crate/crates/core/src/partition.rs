//! Block partition π = (p₁,…,p_k) of a p-vector and the three operators that
//! route regressor blocks to parameter coordinates.
//!
//! Vectors are stored flat; block `h` occupies `offsets[h]..offsets[h+1]`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PartitionSpec {
    block_dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl PartitionSpec {
    pub fn new(block_dims: Vec<usize>) -> Result<Self> {
        if block_dims.is_empty() {
            return Err(Error::InvalidPartition("at least one block required".into()));
        }
        if let Some(h) = block_dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidPartition(format!("block {h} has dimension 0")));
        }
        let mut offsets = Vec::with_capacity(block_dims.len() + 1);
        offsets.push(0);
        for &d in &block_dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self { block_dims, offsets })
    }

    /// Single block of dimension `p`.
    pub fn single(p: usize) -> Result<Self> {
        Self::new(vec![p])
    }

    /// k blocks of dimension one.
    pub fn singletons(k: usize) -> Result<Self> {
        Self::new(vec![1; k])
    }

    pub fn block_dims(&self) -> &[usize] {
        &self.block_dims
    }

    /// Number of blocks k.
    pub fn k(&self) -> usize {
        self.block_dims.len()
    }

    /// Total dimension p.
    pub fn p(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn block(&self, h: usize) -> Range<usize> {
        self.offsets[h]..self.offsets[h + 1]
    }

    /// Block index of flat coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.offsets.partition_point(|&o| o <= i) - 1
    }

    fn check_len(&self, v: usize, what: &'static str) -> Result<()> {
        if v == self.p() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what, expected: self.p(), got: v })
        }
    }

    /// T_π(a, b): blockwise inner products, a k-vector.
    pub fn t_pi<S: Scalar>(&self, a: &[S], b: &[S]) -> Result<Vec<S>> {
        self.check_len(a.len(), "t_pi a")?;
        self.check_len(b.len(), "t_pi b")?;
        Ok((0..self.k())
            .map(|h| {
                let r = self.block(h);
                a[r.clone()].iter().zip(&b[r]).map(|(&x, &y)| x * y).sum()
            })
            .collect())
    }

    /// ρ_π(c, a): scales block h of `a` by `c[h]`.
    pub fn rho_pi<S: Scalar>(&self, c: &[S], a: &[S]) -> Result<Vec<S>> {
        if c.len() != self.k() {
            return Err(Error::DimensionMismatch { what: "rho_pi c", expected: self.k(), got: c.len() });
        }
        self.check_len(a.len(), "rho_pi a")?;
        let mut out = a.to_vec();
        for (h, &ch) in c.iter().enumerate() {
            for v in &mut out[self.block(h)] {
                *v = *v * ch;
            }
        }
        Ok(out)
    }

    /// ρ_π applied column by column to a k×m matrix, giving a p×m matrix.
    pub fn rho_pi_matrix<S: Scalar>(&self, c: &Matrix<S>, a: &[S]) -> Result<Matrix<S>> {
        if c.rows() != self.k() {
            return Err(Error::DimensionMismatch { what: "rho_pi_matrix rows", expected: self.k(), got: c.rows() });
        }
        self.check_len(a.len(), "rho_pi_matrix a")?;
        Ok(Matrix::from_fn(self.p(), c.cols(), |i, j| c[(self.block_of(i), j)] * a[i]))
    }

    /// M_π(C, a, b): block (h₁,h₂) equals C[h₁,h₂] · a_{h₁} b_{h₂}ᵀ.
    pub fn m_pi<S: Scalar>(&self, c: &Matrix<S>, a: &[S], b: &[S]) -> Result<Matrix<S>> {
        if c.rows() != self.k() || c.cols() != self.k() {
            return Err(Error::DimensionMismatch { what: "m_pi C", expected: self.k(), got: c.rows().max(c.cols()) });
        }
        self.check_len(a.len(), "m_pi a")?;
        self.check_len(b.len(), "m_pi b")?;
        let owner: Vec<usize> = (0..self.p()).map(|i| self.block_of(i)).collect();
        Ok(Matrix::from_fn(self.p(), self.p(), |i, j| c[(owner[i], owner[j])] * a[i] * b[j]))
    }

    /// Frobenius norm of M_π(C, a, a) without forming the p×p matrix:
    /// |M|² = Σ C²_{h₁h₂} |a_{h₁}|² |a_{h₂}|².
    pub fn m_pi_norm<S: Scalar>(&self, c: &Matrix<S>, a: &[S]) -> Result<S> {
        self.check_len(a.len(), "m_pi_norm a")?;
        let sq: Vec<S> = (0..self.k()).map(|h| a[self.block(h)].iter().map(|&v| v * v).sum()).collect();
        let mut acc = S::zero();
        for h1 in 0..self.k() {
            for h2 in 0..self.k() {
                let v = c[(h1, h2)];
                acc = acc + v * v * sq[h1] * sq[h2];
            }
        }
        Ok(acc.sqrt())
    }
}

impl TryFrom<Vec<usize>> for PartitionSpec {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<PartitionSpec> for Vec<usize> {
    fn from(p: PartitionSpec) -> Self {
        p.block_dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_validates() {
        assert!(PartitionSpec::new(vec![]).is_err());
        assert!(PartitionSpec::new(vec![2, 0]).is_err());
        let p = PartitionSpec::new(vec![2, 1, 3]).unwrap();
        assert_eq!((p.k(), p.p()), (3, 6));
        assert_eq!(p.block(2), 3..6);
        assert_eq!(p.block_of(0), 0);
        assert_eq!(p.block_of(2), 1);
        assert_eq!(p.block_of(5), 2);
    }

    #[test]
    fn t_pi_examples() {
        let p = PartitionSpec::new(vec![2, 1]).unwrap();
        assert_eq!(p.t_pi(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), vec![14.0, 18.0]);
        let single = PartitionSpec::single(3).unwrap();
        assert_eq!(single.t_pi(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), vec![32.0]);
        let two = PartitionSpec::singletons(2).unwrap();
        assert_eq!(two.t_pi(&[3.0, -2.0], &[3.0, -2.0]).unwrap(), vec![9.0, 4.0]);
    }

    #[test]
    fn rho_pi_examples() {
        let p = PartitionSpec::new(vec![2, 1]).unwrap();
        assert_eq!(p.rho_pi(&[10.0, 100.0], &[1.0, 2.0, 3.0]).unwrap(), vec![10.0, 20.0, 300.0]);
        assert_eq!(p.rho_pi(&[1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let cols = p.rho_pi_matrix(&Matrix::identity(2), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(cols.to_rows(), vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![0.0, 3.0]]);
    }

    #[test]
    fn m_pi_examples() {
        let p = PartitionSpec::new(vec![2, 1]).unwrap();
        let c = Matrix::diag(&[1.0, 2.0]);
        let m = p.m_pi(&c, &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![1.0, 2.0, 0.0], vec![2.0, 4.0, 0.0], vec![0.0, 0.0, 18.0]]);
        let single = PartitionSpec::single(2).unwrap();
        let m = single.m_pi(&Matrix::diag(&[3.0]), &[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!(m.to_rows(), vec![vec![3.0, 6.0], vec![6.0, 12.0]]);
    }

    #[test]
    fn dimension_errors() {
        let p = PartitionSpec::new(vec![2, 1]).unwrap();
        assert!(p.t_pi(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(p.rho_pi(&[1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(p.m_pi(&Matrix::identity(3), &[1.0; 3], &[1.0; 3]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let p = PartitionSpec::new(vec![2, 1]).unwrap();
        assert_eq!(p.t_pi(&[1.0_f32, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), vec![14.0_f32, 18.0]);
    }
}
