#![allow(dead_code)]

use hgp::gp::{HvgpModel, InducingGroup};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_matrix(r: &mut ChaCha8Rng, n: usize, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, d, |_, _| r.sample::<f64, _>(StandardNormal))
}

pub fn normal_vector(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal))
}

/// Random variational state: `mu ~ N(0, s²)`, lower `L` with diagonal in
/// `[0.2, 1.0]` and off-diagonal entries `~ N(0, 0.1²)`.
pub fn randomize_q(model: &mut HvgpModel, r: &mut ChaCha8Rng, s: f64) {
    for g in model.groups_mut() {
        let m = g.len();
        let mu = normal_vector(r, m) * s;
        let mut l = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..i {
                l[(i, j)] = 0.1 * r.sample::<f64, _>(StandardNormal);
            }
            l[(i, i)] = r.random_range(0.2..1.0);
        }
        *g = InducingGroup::new(g.z.clone(), mu, l).unwrap();
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Worst relative error `|a − b| / |b|`, ignoring entries whose absolute
/// error is within `abs_floor`.
pub fn max_rel_err(a: &[f64], b: &[f64], abs_floor: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let e = (x - y).abs();
            if e <= abs_floor {
                0.0
            } else {
                e / y.abs()
            }
        })
        .fold(0.0, f64::max)
}
