use std::fmt::Debug;

use crate::error::Result;
use crate::tensor::{inner_product, DenseTensor};

/// Finite-dimensional real inner-product space with entrywise access.
///
/// Implemented by [`DenseTensor`] and by the block-structured
/// [`GradientField`](crate::linop::GradientField), so prox maps and dual
/// iterations can be written once for both.
pub trait InnerProductSpace: Clone + Debug + Send + Sync {
    fn map(&self, f: impl Fn(f64) -> f64) -> Self;

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self>;

    fn fold_values<A>(&self, init: A, f: impl FnMut(A, f64) -> A) -> A;

    fn inner(&self, other: &Self) -> Result<f64>;

    fn zeros_like(&self) -> Self {
        self.map(|_| 0.0)
    }

    fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// `self + alpha·other`
    fn add_scaled(&self, alpha: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + alpha * b)
    }

    fn norm_sq(&self) -> f64 {
        self.fold_values(0.0, |acc, v| acc + v * v)
    }

    fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    fn abs_sum(&self) -> f64 {
        self.fold_values(0.0, |acc, v| acc + v.abs())
    }

    fn max_abs(&self) -> f64 {
        self.fold_values(0.0, |acc: f64, v| acc.max(v.abs()))
    }

    fn all_finite(&self) -> bool {
        self.fold_values(true, |ok, v| ok && v.is_finite())
    }
}

impl InnerProductSpace for DenseTensor {
    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseTensor::map(self, f)
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        DenseTensor::zip_map(self, other, f)
    }

    fn fold_values<A>(&self, init: A, f: impl FnMut(A, f64) -> A) -> A {
        self.data().iter().copied().fold(init, f)
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        inner_product(self, other)
    }
}
