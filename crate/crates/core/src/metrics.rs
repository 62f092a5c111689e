//! Image-quality metrics on `[0, 1]` intensities.

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

/// Peak signal-to-noise ratio with peak 1.0. Identical inputs give `+∞`.
pub fn psnr(x: &DenseTensor, reference: &DenseTensor) -> Result<f64> {
    x.ensure_same_shape(reference, "psnr")?;
    let sse: f64 = x
        .data()
        .iter()
        .zip(reference.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / x.len() as f64;
    Ok(-10.0 * mse.log10())
}

/// `‖x − reference‖ / ‖reference‖`.
pub fn relative_error(x: &DenseTensor, reference: &DenseTensor) -> Result<f64> {
    let denom = reference.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::param("relative error against a zero reference"));
    }
    Ok(x.sub(reference)?.frobenius_norm() / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let x = DenseTensor::filled(&[4, 4], 0.5).unwrap();
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&y, &x).unwrap() - 20.0).abs() < 1e-9);
        let z = DenseTensor::zeros(&[2, 2]).unwrap();
        let o = DenseTensor::filled(&[2, 2], 1.0).unwrap();
        assert_eq!(psnr(&z, &o).unwrap(), 0.0);
        assert!(psnr(&z, &x).is_err());
    }

    #[test]
    fn relative_error_examples() {
        let r = DenseTensor::new(vec![2], vec![3.0, 4.0]).unwrap();
        let x = DenseTensor::new(vec![2], vec![3.0, 5.0]).unwrap();
        assert!((relative_error(&x, &r).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(relative_error(&r, &r).unwrap(), 0.0);
        assert!(relative_error(&x, &DenseTensor::zeros(&[2]).unwrap()).is_err());
    }
}
