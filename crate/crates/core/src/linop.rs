//! Linear operators on dense tensors: identity, observation mask, forward
//! difference gradient, Einstein-product operators and compositions, plus a
//! power-iteration norm estimate used for step-size selection.


use crate::error::{Error, Result};
use crate::space::InnerProductSpace;
use crate::tensor::{einstein_product, einstein_transpose, DenseTensor};

/// Seed for the power-iteration start vector.
pub const POWER_ITERATION_SEED: u64 = 0x5eed_0f_a11;

/// A linear map from tensors of `domain_shape()` into `Self::Range`, together
/// with its exact adjoint.
pub trait LinearOperator: Send + Sync {
    type Range: InnerProductSpace;

    fn domain_shape(&self) -> &[usize];

    /// Shape of the range. Block-valued ranges report `[blocks, I1, …, IN]`.
    fn codomain_shape(&self) -> Vec<usize>;

    fn apply(&self, x: &DenseTensor) -> Result<Self::Range>;

    fn adjoint(&self, p: &Self::Range) -> Result<DenseTensor>;

    fn range_zeros(&self) -> Self::Range;

    /// `‖opᵀ∘op‖` in closed form, when the operator knows it.
    fn gram_norm_exact(&self) -> Option<f64> {
        None
    }

    fn check_domain(&self, x: &DenseTensor) -> Result<()> {
        if x.shape() != self.domain_shape() {
            return Err(Error::dim(format!(
                "operator expects {:?}, got {:?}",
                self.domain_shape(),
                x.shape()
            )));
        }
        Ok(())
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    type Range = T::Range;

    fn domain_shape(&self) -> &[usize] {
        (**self).domain_shape()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        (**self).codomain_shape()
    }
    fn apply(&self, x: &DenseTensor) -> Result<Self::Range> {
        (**self).apply(x)
    }
    fn adjoint(&self, p: &Self::Range) -> Result<DenseTensor> {
        (**self).adjoint(p)
    }
    fn range_zeros(&self) -> Self::Range {
        (**self).range_zeros()
    }
    fn gram_norm_exact(&self) -> Option<f64> {
        (**self).gram_norm_exact()
    }
}

#[derive(Clone, Debug)]
pub struct IdentityOp {
    shape: Vec<usize>,
}

pub fn identity_op(shape: &[usize]) -> Result<IdentityOp> {
    DenseTensor::zeros(shape)?;
    Ok(IdentityOp { shape: shape.to_vec() })
}

impl LinearOperator for IdentityOp {
    type Range = DenseTensor;

    fn domain_shape(&self) -> &[usize] {
        &self.shape
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.shape.clone()
    }
    fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.check_domain(x)?;
        Ok(x.clone())
    }
    fn adjoint(&self, p: &DenseTensor) -> Result<DenseTensor> {
        self.check_domain(p)?;
        Ok(p.clone())
    }
    fn range_zeros(&self) -> DenseTensor {
        DenseTensor::zeros(&self.shape).expect("shape validated at construction")
    }
    fn gram_norm_exact(&self) -> Option<f64> {
        Some(1.0)
    }
}

/// Indices of the observed entries, stored as a boolean mask (`true` = observed).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedSet {
    shape: Vec<usize>,
    mask: Vec<bool>,
}

impl ObservedSet {
    pub fn new(shape: &[usize], mask: Vec<bool>) -> Result<Self> {
        let probe = DenseTensor::zeros(shape)?;
        if mask.len() != probe.len() {
            return Err(Error::dim(format!(
                "mask of length {} does not fit shape {shape:?}",
                mask.len()
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::param("observed set is empty"));
        }
        Ok(ObservedSet { shape: shape.to_vec(), mask })
    }

    pub fn all(shape: &[usize]) -> Result<Self> {
        let n = DenseTensor::zeros(shape)?.len();
        Self::new(shape, vec![true; n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        1.0 - self.observed_count() as f64 / self.mask.len() as f64
    }

    /// Zeroes the unobserved entries.
    pub fn project(&self, x: &DenseTensor) -> Result<DenseTensor> {
        if x.shape() != self.shape.as_slice() {
            return Err(Error::dim(format!(
                "mask shape {:?} does not match {:?}",
                self.shape,
                x.shape()
            )));
        }
        let data = x
            .data()
            .iter()
            .zip(&self.mask)
            .map(|(&v, &keep)| if keep { v } else { 0.0 })
            .collect();
        DenseTensor::new(self.shape.clone(), data)
    }
}

/// The projection `P_E` onto the observed entries. Self-adjoint and idempotent.
#[derive(Clone, Debug)]
pub struct MaskOp {
    set: ObservedSet,
}

pub fn mask_op(set: ObservedSet) -> MaskOp {
    MaskOp { set }
}

impl MaskOp {
    pub fn observed(&self) -> &ObservedSet {
        &self.set
    }
}

impl LinearOperator for MaskOp {
    type Range = DenseTensor;

    fn domain_shape(&self) -> &[usize] {
        &self.set.shape
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.set.shape.clone()
    }
    fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        self.set.project(x)
    }
    fn adjoint(&self, p: &DenseTensor) -> Result<DenseTensor> {
        self.set.project(p)
    }
    fn range_zeros(&self) -> DenseTensor {
        DenseTensor::zeros(&self.set.shape).expect("shape validated at construction")
    }
    fn gram_norm_exact(&self) -> Option<f64> {
        Some(if self.set.observed_count() > 0 { 1.0 } else { 0.0 })
    }
}

/// `N` congruent blocks; block `n` holds the forward differences along mode `n+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientField {
    blocks: Vec<DenseTensor>,
}

impl GradientField {
    pub fn new(blocks: Vec<DenseTensor>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::dim("gradient field needs blocks"))?;
        if blocks.len() != first.order() {
            return Err(Error::dim(format!(
                "an order-{} source needs {} blocks, got {}",
                first.order(),
                first.order(),
                blocks.len()
            )));
        }
        if blocks.iter().any(|b| b.shape() != first.shape()) {
            return Err(Error::dim("gradient blocks must share one shape"));
        }
        Ok(GradientField { blocks })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let z = DenseTensor::zeros(shape)?;
        Ok(GradientField { blocks: vec![z; shape.len()] })
    }

    pub fn blocks(&self) -> &[DenseTensor] {
        &self.blocks
    }

    pub fn block_shape(&self) -> &[usize] {
        self.blocks[0].shape()
    }

    fn check_congruent(&self, other: &Self) -> Result<()> {
        if self.blocks.len() != other.blocks.len() || self.block_shape() != other.block_shape() {
            return Err(Error::dim("gradient fields are not congruent"));
        }
        Ok(())
    }
}

impl InnerProductSpace for GradientField {
    fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GradientField { blocks: self.blocks.iter().map(|b| b.map(&f)).collect() }
    }

    fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_congruent(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.zip_map(b, &f))
            .collect::<Result<_>>()?;
        Ok(GradientField { blocks })
    }

    fn fold_values<A>(&self, init: A, mut f: impl FnMut(A, f64) -> A) -> A {
        self.blocks
            .iter()
            .fold(init, |acc, b| b.data().iter().fold(acc, |a, &v| f(a, v)))
    }

    fn inner(&self, other: &Self) -> Result<f64> {
        self.check_congruent(other)?;
        self.blocks.iter().zip(&other.blocks).map(|(a, b)| a.inner(b)).sum()
    }
}

/// Forward-difference gradient with a zero row at the last index of each mode.
#[derive(Clone, Debug)]
pub struct GradientOp {
    shape: Vec<usize>,
    strides: Vec<usize>,
}

pub fn gradient_op(shape: &[usize]) -> Result<GradientOp> {
    DenseTensor::zeros(shape)?;
    let mut strides = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    Ok(GradientOp { shape: shape.to_vec(), strides })
}

impl LinearOperator for GradientOp {
    type Range = GradientField;

    fn domain_shape(&self) -> &[usize] {
        &self.shape
    }

    fn codomain_shape(&self) -> Vec<usize> {
        let mut s = vec![self.shape.len()];
        s.extend_from_slice(&self.shape);
        s
    }

    fn apply(&self, x: &DenseTensor) -> Result<GradientField> {
        self.check_domain(x)?;
        let src = x.data();
        let blocks = (0..self.shape.len())
            .map(|axis| {
                let (extent, stride) = (self.shape[axis], self.strides[axis]);
                let span = extent * stride;
                let mut out = x.zeros_like();
                for (o, s) in out.data_mut().chunks_mut(span).zip(src.chunks(span)) {
                    for k in 0..span - stride {
                        o[k] = s[k + stride] - s[k];
                    }
                }
                out
            })
            .collect();
        Ok(GradientField { blocks })
    }

    /// Exact adjoint of the forward differences:
    /// `(D_nᵀ p)_j = p_{j-1}·[j ≥ 1] − p_j·[j ≤ I_n − 2]` along each mode.
    fn adjoint(&self, p: &GradientField) -> Result<DenseTensor> {
        if p.blocks.len() != self.shape.len() || p.block_shape() != self.shape.as_slice() {
            return Err(Error::dim("gradient field does not match the operator shape"));
        }
        let mut out = DenseTensor::zeros(&self.shape)?;
        for (axis, block) in p.blocks.iter().enumerate() {
            let (extent, stride) = (self.shape[axis], self.strides[axis]);
            let span = extent * stride;
            for (o, q) in out.data_mut().chunks_mut(span).zip(block.data().chunks(span)) {
                for k in 0..span - stride {
                    o[k] -= q[k];
                    o[k + stride] += q[k];
                }
            }
        }
        Ok(out)
    }

    /// Kronecker sum of path-graph Laplacians: `Σ_n 4 sin²(π(I_n − 1) / (2 I_n))`.
    fn gram_norm_exact(&self) -> Option<f64> {
        Some(
            self.shape
                .iter()
                .map(|&n| {
                    let s = (std::f64::consts::PI * (n - 1) as f64 / (2 * n) as f64).sin();
                    4.0 * s * s
                })
                .sum(),
        )
    }

    fn range_zeros(&self) -> GradientField {
        GradientField::zeros(&self.shape).expect("shape validated at construction")
    }
}

/// `x ↦ A *_N x` with adjoint `p ↦ Aᵀ *_N p`.
#[derive(Clone, Debug)]
pub struct EinsteinOp {
    a: DenseTensor,
    a_t: DenseTensor,
    domain: Vec<usize>,
    codomain: Vec<usize>,
}

pub fn einstein_op(a: DenseTensor) -> Result<EinsteinOp> {
    if a.order() % 2 != 0 {
        return Err(Error::dim(format!(
            "Einstein operator needs an even-order tensor, got order {}",
            a.order()
        )));
    }
    let n = a.order() / 2;
    let codomain = a.shape()[..n].to_vec();
    let domain = a.shape()[n..].to_vec();
    let a_t = einstein_transpose(&a)?;
    Ok(EinsteinOp { a, a_t, domain, codomain })
}

impl EinsteinOp {
    pub fn tensor(&self) -> &DenseTensor {
        &self.a
    }
}

impl LinearOperator for EinsteinOp {
    type Range = DenseTensor;

    fn domain_shape(&self) -> &[usize] {
        &self.domain
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.codomain.clone()
    }
    fn apply(&self, x: &DenseTensor) -> Result<DenseTensor> {
        einstein_product(&self.a, x)
    }
    fn adjoint(&self, p: &DenseTensor) -> Result<DenseTensor> {
        einstein_product(&self.a_t, p)
    }
    fn range_zeros(&self) -> DenseTensor {
        DenseTensor::zeros(&self.codomain).expect("shape validated at construction")
    }
}

/// `outer ∘ inner`.
#[derive(Clone, Debug)]
pub struct Composed<O, I> {
    outer: O,
    inner: I,
}

pub fn compose<O, I>(outer: O, inner: I) -> Result<Composed<O, I>>
where
    O: LinearOperator,
    I: LinearOperator<Range = DenseTensor>,
{
    if inner.codomain_shape() != outer.domain_shape() {
        return Err(Error::dim(format!(
            "cannot compose: inner range {:?} vs outer domain {:?}",
            inner.codomain_shape(),
            outer.domain_shape()
        )));
    }
    Ok(Composed { outer, inner })
}

impl<O, I> LinearOperator for Composed<O, I>
where
    O: LinearOperator,
    I: LinearOperator<Range = DenseTensor>,
{
    type Range = O::Range;

    fn domain_shape(&self) -> &[usize] {
        self.inner.domain_shape()
    }
    fn codomain_shape(&self) -> Vec<usize> {
        self.outer.codomain_shape()
    }
    fn apply(&self, x: &DenseTensor) -> Result<O::Range> {
        self.outer.apply(&self.inner.apply(x)?)
    }
    fn adjoint(&self, p: &O::Range) -> Result<DenseTensor> {
        self.inner.adjoint(&self.outer.adjoint(p)?)
    }
    fn range_zeros(&self) -> O::Range {
        self.outer.range_zeros()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    /// Estimated `‖op‖`, the square root of the top eigenvalue of `opᵀ∘op`.
    pub norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl NormEstimate {
    /// `‖opᵀ∘op‖ = ‖op‖²`.
    pub fn gram_norm(&self) -> f64 {
        self.norm * self.norm
    }
}

/// `‖opᵀ∘op‖` from the operator's closed form if it has one, otherwise by
/// [`operator_norm_estimate`].
pub fn gram_norm<A: LinearOperator>(op: &A, tol: f64, max_iter: usize) -> Result<NormEstimate> {
    match op.gram_norm_exact() {
        Some(g) => Ok(NormEstimate { norm: g.sqrt(), converged: true, iterations: 0 }),
        None => operator_norm_estimate(op, tol, max_iter),
    }
}

/// Power iteration on `opᵀ∘op` from a seeded uniform start. Stops when two
/// successive Rayleigh quotients agree to `tol` relatively. Running out of
/// iterations is not an error; the estimate is returned unconverged.
pub fn operator_norm_estimate<A: LinearOperator>(
    op: &A,
    tol: f64,
    max_iter: usize,
) -> Result<NormEstimate> {
    if !(tol > 0.0) {
        return Err(Error::param(format!("tolerance must be positive, got {tol}")));
    }
    let mut v = DenseTensor::random_uniform(op.domain_shape(), -1.0, 1.0, POWER_ITERATION_SEED)?;
    let n0 = v.frobenius_norm();
    v = v.scaled(1.0 / n0);

    let mut previous = f64::NAN;
    for it in 1..=max_iter {
        let av = op.apply(&v)?;
        let rayleigh = av.norm_sq();
        if rayleigh == 0.0 {
            return Ok(NormEstimate { norm: 0.0, converged: true, iterations: it });
        }
        if (rayleigh - previous).abs() < tol * rayleigh {
            return Ok(NormEstimate { norm: rayleigh.sqrt(), converged: true, iterations: it });
        }
        previous = rayleigh;
        let w = op.adjoint(&av)?;
        let wn = w.frobenius_norm();
        if wn == 0.0 {
            return Ok(NormEstimate { norm: 0.0, converged: true, iterations: it });
        }
        v = w.scaled(1.0 / wn);
    }
    Ok(NormEstimate { norm: previous.max(0.0).sqrt(), converged: false, iterations: max_iter })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(shape: &[usize], seed: u64) -> DenseTensor {
        DenseTensor::random_uniform(shape, -1.0, 1.0, seed).unwrap()
    }

    #[test]
    fn identity_is_identity() {
        let op = identity_op(&[2, 3]).unwrap();
        let x = random(&[2, 3], 1);
        assert_eq!(op.apply(&x).unwrap(), x);
        assert_eq!(op.adjoint(&x).unwrap(), x);
        let est = operator_norm_estimate(&op, 1e-8, 100).unwrap();
        assert!((est.norm - 1.0).abs() < 1e-8);
        assert!(est.converged);
    }

    #[test]
    fn mask_examples() {
        let shape = [3, 4];
        let all = mask_op(ObservedSet::all(&shape).unwrap());
        let x = random(&shape, 2);
        assert_eq!(all.apply(&x).unwrap(), x);

        let mask: Vec<bool> = (0..12).map(|k| k % 3 != 0).collect();
        let op = mask_op(ObservedSet::new(&shape, mask).unwrap());
        let once = op.apply(&x).unwrap();
        assert_eq!(op.apply(&once).unwrap(), once);
        assert_eq!(once.get(&[0, 0]).unwrap(), 0.0);
        assert_eq!(once.get(&[0, 1]).unwrap(), x.get(&[0, 1]).unwrap());
        let est = operator_norm_estimate(&op, 1e-8, 100).unwrap();
        assert!((est.norm - 1.0).abs() < 1e-8);

        assert!(ObservedSet::new(&shape, vec![false; 12]).is_err());
        assert!(ObservedSet::new(&shape, vec![true; 11]).is_err());
    }

    #[test]
    fn gradient_of_short_vector() {
        let op = gradient_op(&[3]).unwrap();
        let x = DenseTensor::new(vec![3], vec![1.0, 3.0, 6.0]).unwrap();
        let g = op.apply(&x).unwrap();
        assert_eq!(g.blocks()[0].data(), &[2.0, 3.0, 0.0]);
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let op = gradient_op(&[4, 3, 2]).unwrap();
        let c = DenseTensor::filled(&[4, 3, 2], 0.7).unwrap();
        let g = op.apply(&c).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn gradient_blocks_vanish_on_last_slice() {
        let op = gradient_op(&[3, 4, 2]).unwrap();
        let g = op.apply(&random(&[3, 4, 2], 4)).unwrap();
        for (axis, block) in g.blocks().iter().enumerate() {
            let extent = block.shape()[axis];
            let mut idx = vec![0; 3];
            loop {
                if idx[axis] == extent - 1 {
                    assert_eq!(block.get(&idx).unwrap(), 0.0);
                }
                if !crate::tensor::next_index(&mut idx, block.shape()) {
                    break;
                }
            }
        }
    }

    #[test]
    fn gradient_norm_matches_dense_laplacian() {
        // Oracle: build D as a dense n×n matrix and take the top eigenvalue of DᵀD.
        for n in [2usize, 5, 16, 32] {
            let mut d = nalgebra::DMatrix::<f64>::zeros(n, n);
            for i in 0..n - 1 {
                d[(i, i)] = -1.0;
                d[(i, i + 1)] = 1.0;
            }
            let dtd = d.transpose() * &d;
            let top = dtd.symmetric_eigenvalues().iter().copied().fold(f64::MIN, f64::max);
            let est = operator_norm_estimate(&gradient_op(&[n]).unwrap(), 1e-12, 200_000).unwrap();
            assert!(top <= 4.0);
            assert!((est.gram_norm() - top).abs() < 1e-6 * top, "n={n}: {} vs {top}", est.gram_norm());
            let exact = gradient_op(&[n]).unwrap().gram_norm_exact().unwrap();
            assert!((exact - top).abs() < 1e-12 * top, "n={n}: {exact} vs {top}");
        }
    }

    #[test]
    fn multi_mode_gradient_norm_is_a_kronecker_sum() {
        let op = gradient_op(&[5, 4, 3]).unwrap();
        let est = operator_norm_estimate(&op, 1e-13, 200_000).unwrap();
        let exact = op.gram_norm_exact().unwrap();
        assert!((est.gram_norm() - exact).abs() < 1e-6 * exact, "{} vs {exact}", est.gram_norm());
    }

    #[test]
    fn einstein_adjoint_matches_matrix_transpose() {
        let a = random(&[2, 2, 2, 2], 7);
        let op = einstein_op(a.clone()).unwrap();
        let p = random(&[2, 2], 8);
        let got = op.adjoint(&p).unwrap();
        let m = nalgebra::DMatrix::from_row_slice(4, 4, a.data());
        let v = nalgebra::DVector::from_column_slice(p.data());
        let expect = m.transpose() * v;
        for k in 0..4 {
            assert!((got.data()[k] - expect[k]).abs() < 1e-14);
        }
        assert!(einstein_op(random(&[2, 2, 2], 1)).is_err());
        let zero = DenseTensor::zeros(&[2, 2]).unwrap();
        assert_eq!(op.apply(&zero).unwrap(), zero);
    }

    #[test]
    fn compose_checks_shapes() {
        let id = identity_op(&[2, 3]).unwrap();
        let other = identity_op(&[3, 2]).unwrap();
        assert!(compose(&other, &id).is_err());
        let mask = mask_op(ObservedSet::new(&[2, 3], vec![true, false, true, true, false, true]).unwrap());
        let mm = compose(&mask, &mask).unwrap();
        let x = random(&[2, 3], 3);
        assert_eq!(mm.apply(&x).unwrap(), mask.apply(&x).unwrap());
        let ig = compose(gradient_op(&[2, 3]).unwrap(), &id).unwrap();
        assert_eq!(ig.apply(&x).unwrap(), gradient_op(&[2, 3]).unwrap().apply(&x).unwrap());
    }

    #[test]
    fn norm_estimate_rejects_bad_tolerance() {
        let op = identity_op(&[2]).unwrap();
        assert!(operator_norm_estimate(&op, 0.0, 10).is_err());
    }
}
