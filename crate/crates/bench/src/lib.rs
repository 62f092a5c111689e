//! Fixtures shared by the kernel benchmarks.

use tensorprox::harness::{bundled_image, make_mask, MaskSpec};
use tensorprox::{DenseTensor, InnerProductSpace, ObservedSet};

/// The bundled 64×64×3 scene with half its pixels removed.
pub fn completion_instance(p: f64, seed: u64) -> (DenseTensor, ObservedSet) {
    let image = bundled_image().expect("bundled image decodes");
    let observed = make_mask(image.shape(), &MaskSpec::random(p, seed)).expect("valid mask");
    (image, observed)
}

/// `len` iterates of `S* + Σ λ_iⁿ G_i` with `ratios.len()` terms.
pub fn geometric_window(shape: &[usize], ratios: &[f64], len: usize, seed: u64) -> Vec<DenseTensor> {
    let limit = DenseTensor::random_uniform(shape, -1.0, 1.0, seed).expect("valid shape");
    let terms: Vec<DenseTensor> = (0..ratios.len())
        .map(|i| DenseTensor::random_uniform(shape, -1.0, 1.0, seed + 1 + i as u64).expect("valid shape"))
        .collect();
    (0..len)
        .map(|n| {
            ratios.iter().zip(&terms).fold(limit.clone(), |acc, (l, g)| {
                acc.add_scaled(l.powi(n as i32), g).expect("same shapes")
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_expected_shapes() {
        let (image, observed) = completion_instance(0.5, 1);
        assert_eq!(image.shape(), &[64, 64, 3]);
        assert_eq!(observed.shape(), image.shape());
        let w = geometric_window(&[4, 3], &[0.5, -0.2], 5, 9);
        assert_eq!(w.len(), 5);
        assert!(w.iter().all(|x| x.shape() == [4, 3]));
    }
}
