//! Dense N-way tensors.
//!
//! Storage is row-major: the **last** index varies fastest. For a
//! `2 × 2 × 2` tensor the linear order is
//!
//! ```text
//! (0,0,0) (0,0,1) (0,1,0) (0,1,1) (1,0,0) (1,0,1) (1,1,0) (1,1,1)
//! ```
//!
//! Mode unfoldings follow Kolda's convention instead: the row is the index of
//! the unfolded mode and the column index enumerates the remaining modes in
//! increasing order with the *earliest* remaining mode varying fastest. With
//! entries `x[i1,i2,i3] = 1 + i1 + 2 i2 + 4 i3` the three unfoldings are
//!
//! ```text
//! X(1) = [1 3 5 7]    X(2) = [1 2 5 6]    X(3) = [1 2 3 4]
//!        [2 4 6 8]           [3 4 7 8]           [5 6 7 8]
//! ```
//!
//! Mode numbers in this crate are 1-based, as in the usual mathematical
//! notation. Plain `&[usize]` indices are 0-based; [`TensorIndex`] carries
//! 1-based coordinates.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Relative cutoff below which singular values count as zero.
pub const SINGULAR_VALUE_CUTOFF: f64 = 1e-12;

const SVD_MAX_SWEEPS: usize = 10_000;

/// An N-way array of finite `f64` values.
#[derive(Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// 1-based coordinates `(i1, ..., iN)` into a tensor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TensorIndex(Vec<usize>);

impl TensorIndex {
    pub fn new(coords: Vec<usize>) -> Result<Self> {
        if coords.is_empty() || coords.contains(&0) {
            return Err(Error::dim(format!(
                "tensor indices are 1-based and non-empty, got {coords:?}"
            )));
        }
        Ok(TensorIndex(coords))
    }

    pub fn coords(&self) -> &[usize] {
        &self.0
    }

    fn to_zero_based(&self, shape: &[usize]) -> Result<Vec<usize>> {
        if self.0.len() != shape.len() {
            return Err(Error::dim(format!(
                "index of order {} used on tensor of order {}",
                self.0.len(),
                shape.len()
            )));
        }
        self.0
            .iter()
            .zip(shape)
            .map(|(&i, &n)| {
                if i <= n {
                    Ok(i - 1)
                } else {
                    Err(Error::dim(format!("index {:?} outside shape {shape:?}", self.0)))
                }
            })
            .collect()
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::dim("tensor order must be at least 1"));
    }
    if shape.contains(&0) {
        return Err(Error::dim(format!("every extent must be positive, got {shape:?}")));
    }
    shape.iter().try_fold(1usize, |acc, &n| {
        acc.checked_mul(n)
            .ok_or_else(|| Error::dim(format!("shape {shape:?} overflows usize")))
    })
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Advance a 0-based multi-index in row-major order. Returns false on wrap.
pub(crate) fn next_index(idx: &mut [usize], shape: &[usize]) -> bool {
    for k in (0..shape.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return true;
        }
        idx[k] = 0;
    }
    false
}

impl DenseTensor {
    /// Builds a tensor from row-major data. Fails on a bad shape, a length
    /// mismatch or non-finite entries.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {len} entries, got {}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("non-finite entry at linear index {pos}")));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(DenseTensor { shape: shape.to_vec(), data: vec![0.0; len] })
    }

    pub fn filled(shape: &[usize], value: f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        t.data.fill(value);
        Self::new(t.shape, t.data)
    }

    /// Evaluates `f` at every 0-based multi-index.
    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0; shape.len()];
        loop {
            data.push(f(&idx));
            if !next_index(&mut idx, shape) {
                break;
            }
        }
        Self::new(shape.to_vec(), data)
    }

    /// Independent uniform entries in `[lo, hi)` from a ChaCha8 stream.
    pub fn random_uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Result<Self> {
        if !(lo < hi) {
            return Err(Error::param(format!("need lo < hi, got [{lo}, {hi})")));
        }
        let len = check_shape(shape)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..len).map(|_| rng.random_range(lo..hi)).collect();
        Self::new(shape.to_vec(), data)
    }

    /// The order-2N tensor `δ(i1,j1)…δ(iN,jN)`, the unit of the Einstein product.
    pub fn einstein_identity(shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        let mut full = shape.to_vec();
        full.extend_from_slice(shape);
        let mut t = Self::zeros(&full)?;
        for k in 0..n {
            t.data[k * n + k] = 1.0;
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn same_shape(&self, other: &DenseTensor) -> bool {
        self.shape == other.shape
    }

    pub(crate) fn ensure_same_shape(&self, other: &DenseTensor, what: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub(crate) fn linear_index(&self, idx: &[usize]) -> Result<usize> {
        if idx.len() != self.shape.len() {
            return Err(Error::dim(format!(
                "index of order {} used on tensor of order {}",
                idx.len(),
                self.order()
            )));
        }
        let mut lin = 0;
        for ((&i, &n), s) in idx.iter().zip(&self.shape).zip(strides(&self.shape)) {
            if i >= n {
                return Err(Error::dim(format!("index {idx:?} outside shape {:?}", self.shape)));
            }
            lin += i * s;
        }
        Ok(lin)
    }

    /// Entry at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> Result<f64> {
        Ok(self.data[self.linear_index(idx)?])
    }

    /// Entry at 1-based coordinates.
    pub fn at(&self, idx: &TensorIndex) -> Result<f64> {
        self.get(&idx.to_zero_based(&self.shape)?)
    }

    pub fn set(&mut self, idx: &[usize], value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::numerical("refusing to store a non-finite entry"));
        }
        let lin = self.linear_index(idx)?;
        self.data[lin] = value;
        Ok(())
    }

    /// Same data under a new shape with the same number of entries.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(DenseTensor { shape: shape.to_vec(), data: self.data.clone() })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.ensure_same_shape(other, "elementwise operation")?;
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl fmt::Debug for DenseTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const SHOWN: usize = 8;
        write!(f, "DenseTensor {{ shape: {:?}, data: [", self.shape)?;
        for (k, v) in self.data.iter().take(SHOWN).enumerate() {
            if k > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        if self.data.len() > SHOWN {
            write!(f, ", … {} more", self.data.len() - SHOWN)?;
        }
        write!(f, "] }}")
    }
}

/// `⟨a, b⟩ = Σ a·b` over all entries.
pub fn inner_product(a: &DenseTensor, b: &DenseTensor) -> Result<f64> {
    a.ensure_same_shape(b, "inner product")?;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum())
}

/// `(Σ |x|^k)^(1/k)`.
pub fn k_norm(x: &DenseTensor, k: u32) -> Result<f64> {
    match k {
        0 => Err(Error::param("k-norm needs k >= 1")),
        1 => Ok(x.data.iter().map(|v| v.abs()).sum()),
        2 => Ok(x.frobenius_norm()),
        _ => {
            // Scale by the max magnitude so |x|^k cannot overflow.
            let peak = inf_norm(x);
            if peak == 0.0 {
                return Ok(0.0);
            }
            let kf = f64::from(k);
            let s: f64 = x.data.iter().map(|v| (v.abs() / peak).powf(kf)).sum();
            Ok(peak * s.powf(1.0 / kf))
        }
    }
}

pub fn inf_norm(x: &DenseTensor) -> f64 {
    x.data.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `alpha·x + y`.
pub fn axpy(alpha: f64, x: &DenseTensor, y: &DenseTensor) -> Result<DenseTensor> {
    let out = x.zip_map(y, |a, b| alpha * a + b)?;
    if !out.all_finite() {
        return Err(Error::numerical("axpy produced a non-finite entry"));
    }
    Ok(out)
}

fn check_mode(shape: &[usize], mode: usize) -> Result<usize> {
    if mode == 0 || mode > shape.len() {
        return Err(Error::dim(format!(
            "mode {mode} out of range for a tensor of order {}",
            shape.len()
        )));
    }
    Ok(mode - 1)
}

/// Column offsets of the Kolda unfolding along `axis` (0-based).
fn unfold_col_strides(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out = vec![0; shape.len()];
    let mut acc = 1;
    for (k, &n) in shape.iter().enumerate() {
        if k != axis {
            out[k] = acc;
            acc *= n;
        }
    }
    out
}

/// Mode-`mode` matricization `X(n)` of size `I_n × Π_{m≠n} I_m`.
pub fn mode_n_unfold(x: &DenseTensor, mode: usize) -> Result<DMatrix<f64>> {
    let axis = check_mode(&x.shape, mode)?;
    let rows = x.shape[axis];
    let cols = x.len() / rows;
    let col_strides = unfold_col_strides(&x.shape, axis);
    let mut m = DMatrix::zeros(rows, cols);
    let mut idx = vec![0; x.order()];
    for &v in &x.data {
        let col: usize = idx.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
        m[(idx[axis], col)] = v;
        next_index(&mut idx, &x.shape);
    }
    Ok(m)
}

/// Inverse of [`mode_n_unfold`].
pub fn mode_n_fold(m: &DMatrix<f64>, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    let len = check_shape(shape)?;
    let axis = check_mode(shape, mode)?;
    if m.nrows() != shape[axis] || m.nrows() * m.ncols() != len {
        return Err(Error::dim(format!(
            "a {}×{} matrix cannot fold along mode {mode} into {shape:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let col_strides = unfold_col_strides(shape, axis);
    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0; shape.len()];
    loop {
        let col: usize = idx.iter().zip(&col_strides).map(|(i, s)| i * s).sum();
        data.push(m[(idx[axis], col)]);
        if !next_index(&mut idx, shape) {
            break;
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// Singular values of a dense matrix, largest first, with values below
/// `SINGULAR_VALUE_CUTOFF · σ_max` flushed to zero.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let svd = m
        .clone()
        .try_svd(false, false, f64::EPSILON, SVD_MAX_SWEEPS)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let cutoff = s.first().copied().unwrap_or(0.0) * SINGULAR_VALUE_CUTOFF;
    for v in &mut s {
        if *v < cutoff {
            *v = 0.0;
        }
    }
    Ok(s)
}

/// Matrix nuclear norm of one unfolding.
pub fn unfolding_nuclear_norm(x: &DenseTensor, mode: usize) -> Result<f64> {
    Ok(singular_values(&mode_n_unfold(x, mode)?)?.iter().sum())
}

/// Sum over all modes of the unfolding nuclear norms (unweighted).
pub fn nuclear_norm(x: &DenseTensor) -> Result<f64> {
    (1..=x.order()).map(|n| unfolding_nuclear_norm(x, n)).sum()
}

/// Einstein product `(a *_N x)_{i} = Σ_j a_{i j} x_{j}` for an order-2N `a`.
///
/// In row-major storage `a` is exactly the `(Π I) × (Π J)` matrix acting on
/// the flattened `x`, so this is a plain matrix-vector product.
pub fn einstein_product(a: &DenseTensor, x: &DenseTensor) -> Result<DenseTensor> {
    let n = x.order();
    if a.order() != 2 * n {
        return Err(Error::dim(format!(
            "Einstein product needs an order-{} operator for an order-{n} tensor, got order {}",
            2 * n,
            a.order()
        )));
    }
    if a.shape[n..] != x.shape[..] {
        return Err(Error::dim(format!(
            "trailing extents {:?} of the operator do not match {:?}",
            &a.shape[n..],
            x.shape
        )));
    }
    let out_shape = a.shape[..n].to_vec();
    let cols = x.len();
    let data = a
        .data
        .chunks_exact(cols)
        .map(|row| row.iter().zip(&x.data).map(|(p, q)| p * q).sum())
        .collect();
    DenseTensor::new(out_shape, data)
}

/// Swaps the two index groups of an order-2N tensor (`a_{i j} → a_{j i}`).
pub fn einstein_transpose(a: &DenseTensor) -> Result<DenseTensor> {
    if a.order() % 2 != 0 {
        return Err(Error::dim(format!("order {} is not even", a.order())));
    }
    let n = a.order() / 2;
    let rows: usize = a.shape[..n].iter().product();
    let cols: usize = a.shape[n..].iter().product();
    let mut data = vec![0.0; a.len()];
    for r in 0..rows {
        for c in 0..cols {
            data[c * rows + r] = a.data[r * cols + c];
        }
    }
    let mut shape = a.shape[n..].to_vec();
    shape.extend_from_slice(&a.shape[..n]);
    DenseTensor::new(shape, data)
}
