//! Quick oracle checks of the numerical kernels, one line per check.

use std::process::ExitCode;

use anyhow::Result;

use tensorprox::prox::soft_threshold;
use tensorprox::solvers::{project_box, project_nuclear_ball};
use tensorprox::tensor::{inner_product, unfolding_nuclear_norm};
use tensorprox::{
    dual_prox_solve, einstein_op, gradient_op, gt_tet, hosvd_mpe, identity_op, mask_op,
    operator_norm_estimate, DenseTensor, GradientField, InnerLoopConfig, InnerProductSpace, L1Norm,
    LinearOperator, ObservedSet, TetOptions,
};

type Check = fn() -> Result<(bool, String)>;

const CHECKS: [(&str, Check); 7] = [
    ("dual prox vs soft threshold", prox_oracle),
    ("adjoint identities", adjoints),
    ("GT-TET order 1 is Aitken", aitken),
    ("GT-TET geometric kernels", tet_kernels),
    ("HOSVD-MPE linear fixed points", mpe_fixed_points),
    ("projection feasibility", projections),
    ("gradient operator norm", gradient_norm),
];

pub fn run() -> Result<ExitCode> {
    let mut failed = 0;
    for (name, check) in CHECKS {
        let (ok, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e:#}")),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "ok  " } else { "FAIL" });
    }
    println!("{} of {} checks passed", CHECKS.len() - failed, CHECKS.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn random(shape: &[usize], seed: u64) -> Result<DenseTensor> {
    Ok(DenseTensor::random_uniform(shape, -1.0, 1.0, seed)?)
}

fn prox_oracle() -> Result<(bool, String)> {
    let (alpha, mu) = (0.4, 1.0);
    let cfg = InnerLoopConfig { max_inner: 200, tol: None, ..Default::default() };
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let y = random(&[4, 4, 3], seed)?.scaled(2.0);
        let l = identity_op(y.shape())?;
        let out = dual_prox_solve(&y, alpha, &l, &L1Norm, mu, &cfg, None, None)?;
        let exact = soft_threshold(&y, alpha * mu)?;
        worst = worst.max(out.z.sub(&exact)?.max_abs());
    }
    Ok((worst <= 1e-6, format!("max abs deviation {worst:.2e}")))
}

fn adjoint_gap<A: LinearOperator>(op: &A, probe: impl Fn(u64) -> Result<A::Range>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for k in 0..20 {
        let x = random(op.domain_shape(), 100 + k)?;
        let p = probe(200 + k)?;
        let lhs = op.apply(&x)?.inner(&p)?;
        let rhs = inner_product(&x, &op.adjoint(&p)?)?;
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn adjoints() -> Result<(bool, String)> {
    let shape = [5, 4, 3];
    let flags: Vec<bool> = random(&shape, 7)?.data().iter().map(|&u| u > 0.0).collect();
    let mask = mask_op(ObservedSet::new(&shape, flags)?);
    let grad = gradient_op(&shape)?;
    let ein = einstein_op(random(&[3, 4, 5, 4], 9)?)?;
    let ein_range = ein.codomain_shape();
    let gaps = [
        adjoint_gap(&identity_op(&shape)?, |s| random(&shape, s))?,
        adjoint_gap(&mask, |s| random(&shape, s))?,
        adjoint_gap(&grad, |s| {
            Ok(GradientField::new((0..3).map(|n| random(&shape, 10 * s + n)).collect::<Result<_>>()?)?)
        })?,
        adjoint_gap(&ein, |s| random(&ein_range, s))?,
    ];
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    Ok((worst <= 1e-10, format!("worst relative gap {worst:.2e} over 4 operators")))
}

fn aitken() -> Result<(bool, String)> {
    let s = [1.0, 0.6, 0.45];
    let seq = s.iter().map(|&v| DenseTensor::new(vec![1], vec![v])).collect::<Result<Vec<_>, _>>()?;
    let out = gt_tet(&seq, 1, &TetOptions::default())?;
    let expected = s[0] - (s[1] - s[0]).powi(2) / (s[2] - 2.0 * s[1] + s[0]);
    let err = (out.value.data()[0] - expected).abs();
    Ok((err <= 1e-12, format!("|T − Aitken| = {err:.2e}")))
}

fn geometric(limit: &DenseTensor, ratios: &[f64], seed: u64, len: usize) -> Result<Vec<DenseTensor>> {
    let terms = (0..ratios.len()).map(|i| random(limit.shape(), seed + i as u64)).collect::<Result<Vec<_>>>()?;
    (0..len)
        .map(|n| {
            ratios
                .iter()
                .zip(&terms)
                .try_fold(limit.clone(), |acc, (l, g)| acc.add_scaled(l.powi(n as i32), g))
                .map_err(Into::into)
        })
        .collect()
}

fn tet_kernels() -> Result<(bool, String)> {
    let ratios = [0.9, -0.6, 0.35];
    let mut worst: f64 = 0.0;
    for m in 1..=3 {
        let limit = random(&[4, 4, 3], 30 + m as u64)?;
        let seq = geometric(&limit, &ratios[..m], 40, 2 * m + 1)?;
        let out = gt_tet(&seq, m, &TetOptions::default())?;
        worst = worst.max(out.value.sub(&limit)?.frobenius_norm() / limit.frobenius_norm());
    }
    Ok((worst <= 1e-8, format!("worst relative error {worst:.2e} for m = 1..3")))
}

fn mpe_fixed_points() -> Result<(bool, String)> {
    let ratios = [0.8, -0.5, 0.3, 0.1];
    let (mut worst, mut sum_gap): (f64, f64) = (0.0, 0.0);
    for d in 2..=4 {
        let limit = random(&[d], 50 + d as u64)?;
        let seq = geometric(&limit, &ratios[..d], 60, d + 2)?;
        let out = hosvd_mpe(&seq, d)?;
        worst = worst.max(out.value.sub(&limit)?.frobenius_norm() / limit.frobenius_norm());
        sum_gap = sum_gap.max((out.weights.iter().sum::<f64>() - 1.0).abs());
    }
    Ok((worst <= 1e-8 && sum_gap <= 1e-10, format!("worst relative error {worst:.2e}, weight-sum gap {sum_gap:.1e}")))
}

fn projections() -> Result<(bool, String)> {
    let x = random(&[6, 5, 3], 70)?.scaled(3.0);
    let b = project_box(&x, 0.0, 1.0)?;
    let box_ok = b.data().iter().all(|v| (0.0..=1.0).contains(v)) && project_box(&b, 0.0, 1.0)?.data() == b.data();
    let eps = 0.4 * unfolding_nuclear_norm(&x, 1)?;
    let n = project_nuclear_ball(&x, eps, 1)?;
    let norm = unfolding_nuclear_norm(&n, 1)?;
    let again = project_nuclear_ball(&n, eps, 1)?.sub(&n)?.frobenius_norm() / n.frobenius_norm();
    let ok = box_ok && norm <= eps * (1.0 + 1e-8) && again <= 1e-8;
    Ok((ok, format!("box exact: {box_ok}, nuclear ‖·‖*/ε = {:.12}, reprojection change {again:.1e}", norm / eps)))
}

fn gradient_norm() -> Result<(bool, String)> {
    let op = gradient_op(&[8, 6, 3])?;
    let exact = op.gram_norm_exact().expect("closed form");
    let est = operator_norm_estimate(&op, 1e-12, 20_000)?.gram_norm();
    let rel = (est - exact).abs() / exact;
    Ok((rel <= 1e-6, format!("power iteration {est:.8} vs closed form {exact:.8}")))
}
