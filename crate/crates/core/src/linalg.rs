//! Dense SVD with a verified fallback.
//!
//! nalgebra's Golub–Kahan SVD occasionally returns singular vectors that do
//! not reconstruct the input when the matrix is exactly rank deficient (which
//! is what a nuclear-ball projection produces). Every factorization is
//! checked, and a failed one is recomputed from the symmetric eigenproblem of
//! `[[0, M], [Mᵀ, 0]]`, whose positive eigenpairs are `(σ, (u; v)/√2)`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const SVD_EPS: f64 = 5.0 * f64::EPSILON;
const RECONSTRUCTION_TOL: f64 = 1e-11;
const ORTHONORMALITY_TOL: f64 = 1e-9;

/// Thin SVD `M = U diag(s) Vᵀ` with `s` in no particular order.
#[derive(Clone, Debug)]
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    fn reconstruction_error(&self, m: &DMatrix<f64>) -> f64 {
        let mut r = m.clone();
        for (k, &sigma) in self.s.iter().enumerate() {
            r -= sigma * self.u.column(k) * self.v_t.row(k);
        }
        r.norm()
    }

    /// Deviation from orthonormality over the singular vectors whose
    /// singular value is not negligible.
    fn orthonormality_error(&self) -> f64 {
        let top = self.s.iter().copied().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..self.s.len()).filter(|&k| self.s[k] > 1e-12 * top).collect();
        let u = self.u.select_columns(&keep);
        let v_t = self.v_t.select_rows(&keep);
        let id = DMatrix::<f64>::identity(keep.len(), keep.len());
        let uu = u.transpose() * u - &id;
        let vv = &v_t * v_t.transpose() - &id;
        uu.norm().max(vv.norm())
    }
}

pub(crate) fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    check_finite(m)?;
    match checked_golub_kahan(m) {
        Some(f) => Ok(f),
        None => augmented_eigen(m),
    }
}

/// The right singular vector of the smallest singular value, with that
/// value. Falls back to the eigenproblem of `MᵀM` when the SVD fails its
/// checks.
pub(crate) fn smallest_right_singular_vector(m: &DMatrix<f64>) -> Result<(f64, Vec<f64>)> {
    check_finite(m)?;
    let c = m.ncols();
    if let Some(f) = checked_golub_kahan(m) {
        let vv = &f.v_t * f.v_t.transpose() - DMatrix::<f64>::identity(f.s.len(), f.s.len());
        if f.s.len() == c && vv.norm() <= ORTHONORMALITY_TOL {
            let k = (0..c).min_by(|&a, &b| f.s[a].total_cmp(&f.s[b])).expect("at least one column");
            return Ok((f.s[k], f.v_t.row(k).iter().copied().collect()));
        }
    }
    let eig = (m.transpose() * m)
        .try_symmetric_eigen(SVD_EPS, 0)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;
    let k = (0..c)
        .min_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]))
        .expect("at least one column");
    Ok((eig.eigenvalues[k].max(0.0).sqrt(), eig.eigenvectors.column(k).iter().copied().collect()))
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("SVD of a matrix with non-finite entries"));
    }
    Ok(())
}

fn checked_golub_kahan(m: &DMatrix<f64>) -> Option<Svd> {
    let scale = m.norm();
    if scale == 0.0 {
        return None;
    }
    let f = m.clone().try_svd(true, true, SVD_EPS, 0)?;
    let out = Svd {
        u: f.u.expect("requested U"),
        s: f.singular_values.iter().copied().collect(),
        v_t: f.v_t.expect("requested Vᵀ"),
    };
    (out.reconstruction_error(m) <= RECONSTRUCTION_TOL * scale
        && out.orthonormality_error() <= ORTHONORMALITY_TOL)
        .then_some(out)
}

fn augmented_eigen(m: &DMatrix<f64>) -> Result<Svd> {
    let (r, c) = m.shape();
    let n = r + c;
    let mut a = DMatrix::<f64>::zeros(n, n);
    a.view_mut((0, r), (r, c)).copy_from(m);
    a.view_mut((r, 0), (c, r)).copy_from(&m.transpose());
    let eig = a
        .try_symmetric_eigen(SVD_EPS, 0)
        .ok_or_else(|| Error::numerical("symmetric eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let k = r.min(c);
    let mut u = DMatrix::zeros(r, k);
    let mut v_t = DMatrix::zeros(k, c);
    let mut s = Vec::with_capacity(k);
    for (slot, &i) in order.iter().take(k).enumerate() {
        let sigma = eig.eigenvalues[i].max(0.0);
        let e = eig.eigenvectors.column(i);
        let mut ui = e.rows(0, r).into_owned();
        let mut vi = e.rows(r, c).into_owned();
        let (nu, nv) = (ui.norm(), vi.norm());
        if sigma > 0.0 && nu > 0.0 && nv > 0.0 {
            ui /= nu;
            vi /= nv;
        }
        u.set_column(slot, &ui);
        v_t.set_row(slot, &vi.transpose());
        s.push(sigma);
    }
    Ok(Svd { u, s, v_t })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_one() -> DMatrix<f64> {
        let u = DMatrix::from_column_slice(5, 1, &[0.3, -0.2, 0.5, 0.1, -0.7]);
        let v = DMatrix::from_column_slice(4, 1, &[0.4, 0.0, -0.6, 0.2]);
        u * v.transpose()
    }

    #[test]
    fn fallback_reconstructs_rank_deficient_input() {
        let m = rank_one();
        let f = augmented_eigen(&m).unwrap();
        assert!(f.reconstruction_error(&m) < 1e-12);
        let mut s = f.s.clone();
        s.sort_by(|a, b| b.total_cmp(a));
        let expected = m.norm();
        assert!((s[0] - expected).abs() < 1e-12);
        assert!(s[1..].iter().all(|&v| v < 1e-12));
    }

    #[test]
    fn checked_svd_reconstructs() {
        for m in [rank_one(), DMatrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0)] {
            let f = svd(&m).unwrap();
            assert!(f.reconstruction_error(&m) < 1e-11 * m.norm());
        }
    }

    #[test]
    fn zero_matrix_has_zero_spectrum() {
        let f = svd(&DMatrix::zeros(3, 2)).unwrap();
        assert_eq!(f.s, vec![0.0, 0.0]);
    }
}
