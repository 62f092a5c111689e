//! Extrapolation on sequences `S_n = S* + Σ_i λ_iⁿ G_i`, whose limit both
//! methods recover exactly when the order matches the number of terms.

use anyhow::{bail, Result};

use tensorprox::{gt_tet, hosvd_mpe, DenseTensor, InnerProductSpace, TetOptions};

const RATIOS: [f64; 6] = [0.95, -0.8, 0.6, -0.45, 0.3, 0.15];
const SHAPE: [usize; 3] = [4, 4, 3];

pub fn run(max_order: usize, seed: u64) -> Result<()> {
    if max_order == 0 || max_order > RATIOS.len() {
        bail!("--window must be between 1 and {}", RATIOS.len());
    }
    let limit = DenseTensor::random_uniform(&SHAPE, -1.0, 1.0, seed)?;
    let terms = (0..max_order)
        .map(|i| DenseTensor::random_uniform(&SHAPE, -1.0, 1.0, seed + 1 + i as u64))
        .collect::<Result<Vec<_>, _>>()?;
    let rel = |x: &DenseTensor| -> Result<f64> { Ok(x.sub(&limit)?.frobenius_norm() / limit.frobenius_norm()) };
    println!("{:>2}  {:>12}  {:>12}  {:>12}  {:>12}", "m", "S_2m (TET)", "GT-TET", "S_m+1 (MPE)", "HOSVD-MPE");
    for m in 1..=max_order {
        let seq: Vec<DenseTensor> = (0..=2 * m)
            .map(|n| {
                terms[..m].iter().zip(RATIOS).try_fold(limit.clone(), |acc, (g, l)| acc.add_scaled(l.powi(n as i32), g))
            })
            .collect::<Result<_, _>>()?;
        let tet = gt_tet(&seq, m, &TetOptions::default())?;
        let mpe = hosvd_mpe(&seq[..m + 2], m)?;
        println!(
            "{m:>2}  {:>12.3e}  {:>12.3e}  {:>12.3e}  {:>12.3e}",
            rel(&seq[2 * m])?,
            rel(&tet.value)?,
            rel(&seq[m + 1])?,
            rel(&mpe.value)?
        );
    }
    println!("columns are relative errors against the limit S*");
    Ok(())
}
