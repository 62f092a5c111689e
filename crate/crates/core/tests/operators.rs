use tensorprox::linop::{gram_norm, GradientField};
use tensorprox::tensor::inner_product;
use tensorprox::{
    compose, einstein_op, gradient_op, identity_op, mask_op, operator_norm_estimate, DenseTensor,
    InnerProductSpace, LinearOperator, ObservedSet,
};

const PROBES: u64 = 20;

fn random(shape: &[usize], seed: u64) -> DenseTensor {
    DenseTensor::random_uniform(shape, -1.0, 1.0, seed).unwrap()
}

fn random_mask(shape: &[usize], seed: u64) -> ObservedSet {
    let mut flags: Vec<bool> = random(shape, seed).data().iter().map(|&u| u > 0.0).collect();
    flags[0] = true;
    ObservedSet::new(shape, flags).unwrap()
}

/// Worst relative gap in `⟨A x, p⟩ = ⟨x, Aᵀ p⟩` over seeded probes.
fn adjoint_gap<A: LinearOperator>(op: &A, range_probe: impl Fn(u64) -> A::Range) -> f64 {
    (0..PROBES)
        .map(|k| {
            let x = random(op.domain_shape(), 1000 + k);
            let p = range_probe(2000 + k);
            let lhs = op.apply(&x).unwrap().inner(&p).unwrap();
            let rhs = inner_product(&x, &op.adjoint(&p).unwrap()).unwrap();
            (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

fn field_probe(shape: &[usize], seed: u64) -> GradientField {
    GradientField::new((0..shape.len()).map(|n| random(shape, seed * 31 + n as u64)).collect()).unwrap()
}

#[test]
fn identity_adjoint() {
    let shape = [5, 4, 3];
    let op = identity_op(&shape).unwrap();
    assert!(adjoint_gap(&op, |s| random(&shape, s)) <= 1e-10);
}

#[test]
fn mask_adjoint() {
    let shape = [6, 5, 3];
    let op = mask_op(random_mask(&shape, 9));
    assert!(adjoint_gap(&op, |s| random(&shape, s)) <= 1e-10);
}

#[test]
fn gradient_adjoint() {
    for shape in [vec![7], vec![6, 5], vec![5, 4, 3], vec![3, 2, 4, 2]] {
        let op = gradient_op(&shape).unwrap();
        assert!(adjoint_gap(&op, |s| field_probe(&shape, s)) <= 1e-10, "{shape:?}");
    }
}

#[test]
fn einstein_adjoint() {
    let op = einstein_op(random(&[3, 2, 4, 3], 5)).unwrap();
    let range = op.codomain_shape();
    assert!(adjoint_gap(&op, |s| random(&range, s)) <= 1e-10);
}

#[test]
fn composed_adjoints() {
    let shape = [4, 3, 2];
    let a = einstein_op(random(&[4, 3, 2, 4, 3, 2], 3)).unwrap();
    let masked = compose(mask_op(random_mask(&shape, 4)), &a).unwrap();
    assert!(adjoint_gap(&masked, |s| random(&shape, s)) <= 1e-10);
    let grad_of_mask = compose(gradient_op(&shape).unwrap(), mask_op(random_mask(&shape, 6))).unwrap();
    assert!(adjoint_gap(&grad_of_mask, |s| field_probe(&shape, s)) <= 1e-10);
}

#[test]
fn compose_with_identity_is_transparent() {
    let shape = [4, 3, 2];
    let a = einstein_op(random(&[4, 3, 2, 4, 3, 2], 8)).unwrap();
    let c = compose(identity_op(&shape).unwrap(), &a).unwrap();
    for k in 0..5 {
        let x = random(&shape, k);
        assert_eq!(c.apply(&x).unwrap().data(), a.apply(&x).unwrap().data());
    }
}

#[test]
fn mask_composed_with_itself_is_the_mask() {
    let shape = [5, 5, 3];
    let set = random_mask(&shape, 12);
    let twice = compose(mask_op(set.clone()), mask_op(set.clone())).unwrap();
    let once = mask_op(set);
    for k in 0..5 {
        let x = random(&shape, k);
        assert_eq!(twice.apply(&x).unwrap().data(), once.apply(&x).unwrap().data());
    }
}

#[test]
fn projections_have_unit_norm() {
    let shape = [6, 4, 3];
    let tol = 1e-9;
    let mask = mask_op(random_mask(&shape, 2));
    let est = operator_norm_estimate(&mask, tol, 100).unwrap();
    assert!((est.norm - 1.0).abs() <= tol, "{est:?}");
    let est = operator_norm_estimate(&identity_op(&shape).unwrap(), tol, 100).unwrap();
    assert!((est.norm - 1.0).abs() <= tol, "{est:?}");
}

#[test]
fn power_iteration_agrees_with_closed_form_gradient_norm() {
    let op = gradient_op(&[8, 6, 3]).unwrap();
    let exact = gram_norm(&op, 1e-12, 0).unwrap().gram_norm();
    let est = operator_norm_estimate(&op, 1e-12, 20_000).unwrap();
    assert!((est.gram_norm() - exact).abs() <= 1e-6 * exact, "{} vs {exact}", est.gram_norm());
}
