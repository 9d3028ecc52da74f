mod common;

use common::*;
use hgp::gp::{elbo, elbo_grad, HvgpModel, Likelihood, SvgpModel};
use hgp::kernels::{Embedding, Kernel};
use hgp::training::finite_diff_grad;
use hgp::transforms::{compose, default_probes, CyclicTransform};
use nalgebra::{DMatrix, DVector};

fn check(model: &HvgpModel, x: &DMatrix<f64>, y: &DVector<f64>, n: usize) -> f64 {
    let (_, g) = elbo_grad(model, x, y, n).unwrap();
    let analytic = g.to_flat();
    let p0 = model.params();
    assert_eq!(analytic.len(), p0.len());
    let mut work = model.clone();
    let fd = finite_diff_grad(
        |p| {
            work.set_params(p).unwrap();
            elbo(&work, x, y, n).unwrap()
        },
        &p0,
        1e-5,
    );
    max_rel_err(&analytic, &fd, 1e-6)
}

fn two_by_three(lik: Likelihood, seed: u64) -> (HvgpModel, DMatrix<f64>, DVector<f64>) {
    let mut r = rng(seed);
    let k = Kernel::rbf(vec![0.9], 1.3).unwrap();
    let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
    let mut m = HvgpModel::new(k, CyclicTransform::negation_all(1), zs, lik).unwrap();
    randomize_q(&mut m, &mut r, 0.5);
    let x = normal_matrix(&mut r, 4, 1);
    let y = match lik {
        Likelihood::Bernoulli(_) => DVector::from_column_slice(&[1.0, 0.0, 0.0, 1.0]),
        _ => normal_vector(&mut r, 4),
    };
    (m, x, y)
}

#[test]
fn hvgp_gaussian_gradient() {
    for seed in 0..3 {
        let (m, x, y) = two_by_three(Likelihood::gaussian(0.4).unwrap(), seed);
        assert!(check(&m, &x, &y, 20) <= 1e-4);
    }
}

#[test]
fn hvgp_bernoulli_gradient() {
    let (m, x, y) = two_by_three(Likelihood::bernoulli(), 11);
    assert!(check(&m, &x, &y, 9) <= 1e-4);
}

#[test]
fn svgp_gradient() {
    let mut r = rng(3);
    let k = Kernel::matern32(vec![0.7, 1.4], 0.8).unwrap();
    let svgp = SvgpModel::new(k, normal_matrix(&mut r, 5, 2), Likelihood::gaussian(0.2).unwrap()).unwrap();
    let mut m = svgp.into_hvgp();
    randomize_q(&mut m, &mut r, 1.0);
    let x = normal_matrix(&mut r, 8, 2);
    let y = normal_vector(&mut r, 8);
    assert!(check(&m, &x, &y, 8) <= 1e-4);
}

#[test]
fn rotation_and_multiway_gradients() {
    let mut r = rng(5);
    let k = Kernel::rbf(vec![1.1], 0.9).unwrap();
    let rot = CyclicTransform::rotation(2, (0, 1), 4).unwrap();
    let zs = (0..3).map(|_| normal_matrix(&mut r, 3, 2)).collect();
    let mut m = HvgpModel::new(k, rot, zs, Likelihood::gaussian(0.3).unwrap()).unwrap();
    randomize_q(&mut m, &mut r, 0.5);
    let x = normal_matrix(&mut r, 6, 2);
    let y = normal_vector(&mut r, 6);
    assert!(check(&m, &x, &y, 30) <= 1e-4);

    let k = Kernel::matern32(vec![1.2], 1.1).unwrap();
    let g = compose(
        vec![
            CyclicTransform::negation(3, vec![0]).unwrap(),
            CyclicTransform::negation(3, vec![1, 2]).unwrap(),
        ],
        &default_probes(3, 8, 1),
    )
    .unwrap();
    let zs = (0..4).map(|_| normal_matrix(&mut r, 2, 3)).collect();
    let mut m = HvgpModel::new(k, g, zs, Likelihood::gaussian(0.3).unwrap()).unwrap();
    randomize_q(&mut m, &mut r, 0.5);
    let x = normal_matrix(&mut r, 5, 3);
    let y = normal_vector(&mut r, 5);
    assert!(check(&m, &x, &y, 5) <= 1e-4);
}

#[test]
fn sphere_torus_gradient() {
    let mut r = rng(9);
    let k = Kernel::rbf(vec![0.8], 1.0)
        .unwrap()
        .with_embedding(Embedding::LonLatSphere);
    let mut g = CyclicTransform::torus_shift(2, 0, 360.0, 6).unwrap();
    if let CyclicTransform::TorusShift { origin, .. } = &mut g {
        *origin = -180.0;
    }
    let zs = (0..4).map(|_| normal_matrix(&mut r, 2, 2) * 40.0).collect();
    let mut m = HvgpModel::new(k, g, zs, Likelihood::gaussian(0.3).unwrap()).unwrap();
    randomize_q(&mut m, &mut r, 0.5);
    let x = normal_matrix(&mut r, 5, 2) * 40.0;
    let y = normal_vector(&mut r, 5);
    assert!(check(&m, &x, &y, 10) <= 1e-4);
}

#[test]
fn kl_gradient_vanishes_at_prior_mean() {
    let mut r = rng(1);
    let k = Kernel::rbf(vec![1.0], 1.0).unwrap();
    let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
    let m = HvgpModel::new(k, CyclicTransform::negation_all(1), zs, Likelihood::gaussian(1.0).unwrap()).unwrap();
    // Far-away data: the likelihood term does not touch the inducing variables.
    let x = DMatrix::from_element(1, 1, 1e3);
    let y = DVector::from_element(1, 0.0);
    let (_, g) = elbo_grad(&m, &x, &y, 1).unwrap();
    for gg in &g.groups {
        assert!(gg.mu.amax() < 1e-12);
    }
}

#[test]
fn far_inducing_point_has_no_gradient() {
    let mut r = rng(2);
    let k = Kernel::rbf(vec![0.5], 1.0).unwrap();
    let mut z = normal_matrix(&mut r, 4, 2);
    z[(3, 0)] = 200.0;
    z[(3, 1)] = -150.0;
    let mut m = SvgpModel::new(k, z, Likelihood::gaussian(0.5).unwrap()).unwrap().into_hvgp();
    randomize_q(&mut m, &mut r, 0.5);
    let x = normal_matrix(&mut r, 6, 2);
    let y = normal_vector(&mut r, 6);
    let (_, g) = elbo_grad(&m, &x, &y, 6).unwrap();
    assert!(g.groups[0].z.row(3).amax() < 1e-8);
}
