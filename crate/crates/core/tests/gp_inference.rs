mod common;

use approx::assert_abs_diff_eq;
use common::*;
use hgp::gp::*;
use hgp::hkd::HarmonicPart;
use hgp::kernels::Kernel;
use hgp::linalg::{cholesky_jittered, min_eigenvalue};
use hgp::transforms::{CyclicTransform, MultiWayTransform};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn rbf() -> Kernel {
    Kernel::rbf(vec![1.0], 1.0).unwrap()
}

#[test]
fn svgp_single_inducing_point() {
    let z = DMatrix::from_element(1, 1, 0.0);
    let m = SvgpModel::from_parts(
        rbf(),
        z.clone(),
        DVector::from_element(1, 1.0),
        DMatrix::from_element(1, 1, 0.5f64.sqrt()),
        Likelihood::gaussian(1.0).unwrap(),
        0.0,
    )
    .unwrap();
    let p = svgp_predict(&m, &z).unwrap();
    assert_abs_diff_eq!(p.mean[0], 1.0, epsilon = 1e-14);
    assert_abs_diff_eq!(p.var[0], 0.5, epsilon = 1e-14);
}

#[test]
fn svgp_prior_and_conditioning() {
    let mut r = rng(4);
    let z = normal_matrix(&mut r, 6, 2);
    let k = Kernel::rbf(vec![0.9], 1.7).unwrap();
    let prior = SvgpModel::new(k.clone(), z.clone(), Likelihood::gaussian(0.1).unwrap()).unwrap();
    let xs = normal_matrix(&mut r, 10, 2);
    let p = svgp_predict(&prior, &xs).unwrap();
    assert!(p.mean.amax() < 1e-12);
    assert!(p.var.iter().all(|v| (v - 1.7).abs() < 1e-6));

    let u0 = normal_vector(&mut r, 6);
    let tiny = DMatrix::identity(6, 6) * 1e-9;
    let m = SvgpModel::from_parts(k, z.clone(), u0.clone(), tiny, Likelihood::gaussian(0.1).unwrap(), 1e-10)
        .unwrap();
    let p = svgp_predict(&m, &z).unwrap();
    assert!((p.mean - u0).amax() < 1e-6);
    assert!(p.var.amax() < 1e-6);
}

#[test]
fn hvgp_prior_is_prior() {
    let mut r = rng(7);
    let zs = vec![normal_matrix(&mut r, 4, 1), normal_matrix(&mut r, 4, 1)];
    let m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(0.5).unwrap()).unwrap();
    let p = hvgp_predict(&m, &normal_matrix(&mut r, 20, 1)).unwrap();
    assert!(p.mean.amax() < 1e-12);
    assert!(p.var.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn single_part_matches_svgp() {
    let mut r = rng(8);
    let k = Kernel::matern32(vec![0.8, 1.3], 1.4).unwrap();
    let mut m = SvgpModel::new(k, normal_matrix(&mut r, 7, 2), Likelihood::gaussian(0.5).unwrap())
        .unwrap()
        .into_hvgp();
    randomize_q(&mut m, &mut r, 1.0);
    let xs = normal_matrix(&mut r, 30, 2);
    let a = hvgp_predict(&m, &xs).unwrap();
    let svgp = SvgpModel::from_hvgp(m).unwrap();
    let b = svgp_predict(&svgp, &xs).unwrap();
    assert!((a.mean - b.mean).amax() <= 1e-12);
    assert!((a.var - b.var).amax() <= 1e-12);
}

#[test]
fn breakdown_sums_and_positive_variance() {
    let mut r = rng(9);
    let k = Kernel::rbf(vec![1.2], 0.8).unwrap();
    let g = CyclicTransform::rotation(2, (0, 1), 4).unwrap();
    let zs = (0..3).map(|_| normal_matrix(&mut r, 5, 2)).collect();
    let mut m = HvgpModel::new(k, g, zs, Likelihood::gaussian(0.5).unwrap()).unwrap();
    randomize_q(&mut m, &mut r, 1.0);
    let p = hvgp_predict(&m, &normal_matrix(&mut r, 40, 2)).unwrap();
    let mut mean = DVector::zeros(40);
    let mut var = DVector::zeros(40);
    for part in &p.parts {
        mean += &part.mean;
        var += &part.var;
    }
    assert!((mean - &p.mean).amax() <= 1e-10);
    assert!((var - &p.var).amax() <= 1e-10);
    assert!(p.var.iter().all(|v| *v > 0.0));
}

#[test]
fn even_and_odd_parts() {
    let parts = hgp::hkd::real_decomposition(&rbf(), CyclicTransform::negation_all(1)).unwrap();
    let mut r = rng(10);
    for _ in 0..50 {
        let x = [normal_vector(&mut r, 1)[0]];
        let z = [normal_vector(&mut r, 1)[0]];
        let k0 = parts[0].eval(&x, &z).unwrap().re;
        let k0n = parts[0].eval(&[-x[0]], &z).unwrap().re;
        let k1 = parts[1].eval(&x, &z).unwrap().re;
        let k1n = parts[1].eval(&[-x[0]], &z).unwrap().re;
        assert!((k0 - k0n).abs() <= 1e-12);
        assert!((k1 + k1n).abs() <= 1e-12);
    }
}

#[test]
fn elbo_single_point_by_hand() {
    // E_{f~N(0,1)} log N(1; f, 1) = −½log 2π − ½E[(1−f)²] = −½log 2π − 1
    let expected = -0.5 * (2.0 * std::f64::consts::PI).ln() - 1.0;
    assert_abs_diff_eq!(expected, -1.9189385332046727, epsilon = 1e-15);
    let z = DMatrix::from_element(1, 1, 0.0);
    let m = SvgpModel::from_parts(
        rbf(),
        z.clone(),
        DVector::zeros(1),
        DMatrix::identity(1, 1),
        Likelihood::gaussian(1.0).unwrap(),
        0.0,
    )
    .unwrap();
    let v = elbo(&m, &z, &DVector::from_element(1, 1.0), 1).unwrap();
    assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
}

#[test]
fn kl_examples() {
    let one = DMatrix::identity(1, 1);
    assert_abs_diff_eq!(
        kl_gaussian(&DVector::from_element(1, 1.0), &one, &one).unwrap(),
        0.5,
        epsilon = 1e-15
    );
    let e = std::f64::consts::E;
    let l = DMatrix::from_element(1, 1, e.sqrt());
    assert_abs_diff_eq!(
        kl_gaussian(&DVector::zeros(1), &l, &one).unwrap(),
        0.5 * (e - 2.0),
        epsilon = 1e-15
    );
    assert_abs_diff_eq!(0.5 * (e - 2.0), 0.3591409142295225, epsilon = 1e-15);
    let mut r = rng(11);
    let z = normal_matrix(&mut r, 6, 2);
    let kuu = rbf().gram_real(&z, &z).unwrap() + DMatrix::identity(6, 6) * 1e-6;
    let (chol, _) = cholesky_jittered(&kuu, 0.0).unwrap();
    assert!(kl_gaussian(&DVector::zeros(6), &chol.l(), &kuu).unwrap().abs() < 1e-10);
}

#[test]
fn kl_is_zero_at_prior_with_far_data() {
    let mut r = rng(12);
    let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
    let m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(1.0).unwrap()).unwrap();
    assert!(kl_terms(&m).unwrap().iter().all(|k| k.abs() < 1e-10));
}

#[test]
fn optimal_s_examples() {
    let kuu = DMatrix::identity(1, 1);
    let s = optimal_s(&kuu, &DMatrix::from_element(1, 1, 1.0), &DVector::from_element(1, 1.0)).unwrap();
    assert_abs_diff_eq!(s[(0, 0)], 0.5, epsilon = 1e-15);
    let mut r = rng(13);
    for seed in 0..5u64 {
        let z = normal_matrix(&mut r, 10, 2);
        let x = normal_matrix(&mut r, 30, 2);
        let k = Kernel::rbf(vec![1.0 + seed as f64 * 0.2], 1.0).unwrap();
        let kuu = k.gram_real(&z, &z).unwrap() + DMatrix::identity(10, 10) * 1e-6;
        let kuf = k.gram_real(&z, &x).unwrap();
        let none = optimal_s(&kuu, &kuf, &DVector::zeros(30)).unwrap();
        assert!((none - &kuu).amax() < 1e-9);
        let s = optimal_s(&kuu, &kuf, &DVector::from_element(30, 4.0)).unwrap();
        // Loewner order: Kuu − S⋆ is PSD, and the sorted spectra are ordered.
        assert!(min_eigenvalue(&(&kuu - &s)) >= -1e-9);
        let mut es: Vec<f64> = s.symmetric_eigenvalues().iter().copied().collect();
        let mut ek: Vec<f64> = kuu.symmetric_eigenvalues().iter().copied().collect();
        es.sort_by(f64::total_cmp);
        ek.sort_by(f64::total_cmp);
        assert!(es.iter().zip(&ek).all(|(a, b)| *a <= b + 1e-9));
    }
}

#[test]
fn elbo_below_evidence() {
    let mut r = rng(14);
    let x = normal_matrix(&mut r, 40, 1);
    let y = normal_vector(&mut r, 40);
    let k = Kernel::rbf(vec![0.7], 1.1).unwrap();
    let ev = exact_log_evidence(&k, &x, &y, 0.3).unwrap();
    for _ in 0..20 {
        let zs = vec![normal_matrix(&mut r, 4, 1), normal_matrix(&mut r, 4, 1)];
        let mut m = HvgpModel::new(k.clone(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(0.3).unwrap())
            .unwrap();
        randomize_q(&mut m, &mut r, 1.0);
        assert!(elbo(&m, &x, &y, 40).unwrap() <= ev + 1e-8);
    }
}

fn shared_z_model(m_pts: usize, seed: u64) -> (HvgpModel, DMatrix<f64>) {
    let mut r = rng(seed);
    let k = Kernel::rbf(vec![0.9], 1.2).unwrap();
    let z = normal_matrix(&mut r, m_pts, 2);
    let mut m = HvgpModel::new(
        k,
        CyclicTransform::negation_all(2),
        vec![z.clone(), z],
        Likelihood::gaussian(0.2).unwrap(),
    )
    .unwrap();
    randomize_q(&mut m, &mut r, 1.0);
    (m, normal_matrix(&mut r, 50, 2))
}

#[test]
fn orbit_svgp_matches_hvgp() {
    let (m, xs) = shared_z_model(6, 15);
    let svgp = build_orbit_svgp(&m, None).unwrap();
    let a = hvgp_predict(&m, &xs).unwrap();
    let b = svgp_predict(&svgp, &xs).unwrap();
    assert!((a.mean - b.mean).amax() <= 1e-8);
    assert!((a.var - b.var).amax() <= 1e-8);

    // Correlated joint posterior over (u0, u1).
    let mut r = rng(16);
    let mu = normal_vector(&mut r, 12);
    let w = normal_matrix(&mut r, 12, 12) * 0.3;
    let s = &w * w.transpose() + DMatrix::identity(12, 12) * 0.05;
    let svgp = build_orbit_svgp(&m, Some((&mu, &s))).unwrap();
    let a = joint_hvgp_predict(&m, &mu, &s, &xs).unwrap();
    let b = svgp_predict(&svgp, &xs).unwrap();
    assert!((a.mean - b.mean).amax() <= 1e-8);
    assert!((a.var - b.var).amax() <= 1e-8);
}

#[test]
fn orbit_svgp_at_prior() {
    let mut r = rng(17);
    let z = normal_matrix(&mut r, 4, 1);
    let m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), vec![z.clone(), z], Likelihood::gaussian(1.0).unwrap())
        .unwrap();
    let svgp = build_orbit_svgp(&m, None).unwrap();
    let p = svgp_predict(&svgp, &normal_matrix(&mut r, 10, 1)).unwrap();
    assert!(p.mean.amax() < 1e-10);
    assert!(p.var.iter().all(|v| (v - 1.0).abs() < 1e-6));
}

#[test]
fn orbit_svgp_rejects_unsupported() {
    let mut r = rng(18);
    let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
    let m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(1.0).unwrap()).unwrap();
    assert!(matches!(build_orbit_svgp(&m, None), Err(hgp::Error::Unsupported(_))));
    let k = Kernel::rbf(vec![1.0], 1.0).unwrap();
    let g = CyclicTransform::rotation(2, (0, 1), 4).unwrap();
    let z = normal_matrix(&mut r, 3, 2);
    let m = HvgpModel::new(k, g, vec![z.clone(), z.clone(), z], Likelihood::gaussian(1.0).unwrap()).unwrap();
    assert!(matches!(build_orbit_svgp(&m, None), Err(hgp::Error::Unsupported(_))));
}

#[test]
fn two_by_two_block_relation() {
    // m = 1, Z = [1]: A·Kvv·Aᵀ with A = ½[[1,1],[1,−1]] is diag(K₀,uu, K₁,uu).
    let k = rbf();
    let kvv = DMatrix::from_row_slice(
        2,
        2,
        &[
            k.eval_real(&[1.0], &[1.0]),
            k.eval_real(&[1.0], &[-1.0]),
            k.eval_real(&[-1.0], &[1.0]),
            k.eval_real(&[-1.0], &[-1.0]),
        ],
    );
    let f = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, -0.5]);
    let blocks = &f * kvv * f.transpose();
    let parts = hgp::hkd::real_decomposition(&k, CyclicTransform::negation_all(1)).unwrap();
    let k0 = parts[0].eval(&[1.0], &[1.0]).unwrap().re;
    let k1 = parts[1].eval(&[1.0], &[1.0]).unwrap().re;
    assert_abs_diff_eq!(blocks[(0, 0)], k0, epsilon = 1e-12);
    assert_abs_diff_eq!(blocks[(1, 1)], k1, epsilon = 1e-12);
    assert_abs_diff_eq!(blocks[(0, 1)], 0.0, epsilon = 1e-12);
    assert_abs_diff_eq!(blocks[(1, 0)], 0.0, epsilon = 1e-12);
}

#[test]
fn span_equivalence_t2_t4() {
    let mut r = rng(19);
    let k = Kernel::rbf(vec![0.8], 1.0).unwrap();
    for (g, d) in [
        (CyclicTransform::negation_all(2), 2),
        (CyclicTransform::rotation(2, (0, 1), 4).unwrap(), 2),
    ] {
        let z = normal_matrix(&mut r, 6, d);
        let x = normal_matrix(&mut r, 24, d);
        let (a, b) = span_nystrom(&k, &MultiWayTransform::from(g), &z, &x, 1e-8).unwrap();
        let diff = (a - b).iter().map(|v| v.norm()).fold(0.0, f64::max);
        assert!(diff <= 1e-8, "span residual {diff:e}");
    }
}

#[test]
fn bernoulli_prediction_range() {
    let l = Likelihood::bernoulli();
    let (p, v) = l.predictive(0.3, 0.5);
    assert!(p > 0.5 && p < 1.0 && v > 0.0);
    let g = Likelihood::gaussian(0.2).unwrap();
    assert_eq!(g.predictive(1.0, 0.3), (1.0, 0.5));
}

#[test]
fn part_kernel_identity_gram() {
    let mut r = rng(20);
    let k = Kernel::rbf(vec![1.0], 1.0).unwrap();
    let x = normal_matrix(&mut r, 5, 2);
    let id = HarmonicPart::identity(k.clone(), 2);
    assert!((id.gram_real(&x, &x).unwrap() - k.gram_real(&x, &x).unwrap()).amax() == 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn variance_positive_and_breakdown_consistent(seed in 0u64..10_000, s in 0.1f64..2.0) {
        let mut r = rng(seed);
        let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
        let mut m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(0.5).unwrap()).unwrap();
        randomize_q(&mut m, &mut r, s);
        let p = hvgp_predict(&m, &normal_matrix(&mut r, 10, 1)).unwrap();
        prop_assert!(p.var.iter().all(|v| *v > 0.0));
        let total: DVector<f64> = p.parts.iter().fold(DVector::zeros(10), |acc, q| acc + &q.var);
        // relative: random S with near-singular odd-part Kuu can give large variances
        for (a, b) in total.iter().zip(p.var.iter()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn elbo_never_exceeds_evidence(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let x = normal_matrix(&mut r, 20, 1);
        let y = normal_vector(&mut r, 20);
        let zs = vec![normal_matrix(&mut r, 3, 1), normal_matrix(&mut r, 3, 1)];
        let mut m = HvgpModel::new(rbf(), CyclicTransform::negation_all(1), zs, Likelihood::gaussian(0.4).unwrap()).unwrap();
        randomize_q(&mut m, &mut r, 1.0);
        let ev = exact_log_evidence(&rbf(), &x, &y, 0.4).unwrap();
        prop_assert!(elbo(&m, &x, &y, 20).unwrap() <= ev + 1e-8);
    }
}

