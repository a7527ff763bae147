//! Tuples of dense matrices.
//!
//! Every point, tangent vector and dual variable in this crate is a `Blocks`
//! value: a single matrix for the Stiefel manifold, one matrix per factor for
//! products. All arithmetic is blockwise and the inner product is the sum of
//! the Frobenius inner products of the blocks.

use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Blocks(pub Vec<DMatrix<f64>>);

impl Blocks {
    pub fn single(m: DMatrix<f64>) -> Self {
        Blocks(vec![m])
    }

    pub fn zeros_like(other: &Blocks) -> Self {
        Blocks(
            other
                .0
                .iter()
                .map(|m| DMatrix::zeros(m.nrows(), m.ncols()))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, DMatrix<f64>> {
        self.0.iter()
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.0.iter().map(|m| m.shape()).collect()
    }

    pub fn same_shape(&self, other: &Blocks) -> bool {
        self.shapes() == other.shapes()
    }

    pub fn check_shape(&self, other: &Blocks, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: expected shapes {:?}, got {:?}",
                self.shapes(),
                other.shapes()
            )))
        }
    }

    pub fn num_entries(&self) -> usize {
        self.0.iter().map(|m| m.len()).sum()
    }

    pub fn inner(&self, other: &Blocks) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.dot(b)).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|m| m.norm_squared()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn l1_norm(&self) -> f64 {
        self.0.iter().map(|m| m.iter().map(|v| v.abs()).sum::<f64>()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|m| m.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&self, s: f64) -> Blocks {
        Blocks(self.0.iter().map(|m| m * s).collect())
    }

    /// `self + s * other`
    pub fn axpy(&self, s: f64, other: &Blocks) -> Blocks {
        Blocks(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + b * s)
                .collect(),
        )
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Blocks {
        Blocks(self.0.iter().map(|m| m.map(&f)).collect())
    }

    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &Blocks, f: F) -> Blocks {
        Blocks(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a.zip_map(b, &f))
                .collect(),
        )
    }

    pub fn distance(&self, other: &Blocks) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            .sqrt()
    }
}

impl From<DMatrix<f64>> for Blocks {
    fn from(m: DMatrix<f64>) -> Self {
        Blocks::single(m)
    }
}

impl Index<usize> for Blocks {
    type Output = DMatrix<f64>;
    fn index(&self, i: usize) -> &DMatrix<f64> {
        &self.0[i]
    }
}

impl IndexMut<usize> for Blocks {
    fn index_mut(&mut self, i: usize) -> &mut DMatrix<f64> {
        &mut self.0[i]
    }
}

impl Add<&Blocks> for &Blocks {
    type Output = Blocks;
    fn add(self, rhs: &Blocks) -> Blocks {
        Blocks(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub<&Blocks> for &Blocks {
    type Output = Blocks;
    fn sub(self, rhs: &Blocks) -> Blocks {
        Blocks(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

impl Mul<f64> for &Blocks {
    type Output = Blocks;
    fn mul(self, s: f64) -> Blocks {
        self.scale(s)
    }
}

impl Neg for &Blocks {
    type Output = Blocks;
    fn neg(self) -> Blocks {
        self.scale(-1.0)
    }
}

/// Symmetric part `(M + Mᵀ) / 2` of a square matrix.
pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}
