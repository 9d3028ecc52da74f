//! Initialization heuristics: k-means inducing inputs, median-distance
//! lengthscales and PCA directions for negation transforms.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::rows;
use crate::rng;
use crate::transforms::CyclicTransform;

const LLOYD_ITERATIONS: usize = 25;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// k-means++ seeding followed by a fixed number of Lloyd iterations.
pub fn kmeans_init(x: &DMatrix<f64>, m: usize, seed: u64) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if m == 0 || m > n {
        return Err(Error::Parameter(format!("cannot pick {m} centres from {n} points")));
    }
    let pts = rows(x);
    let mut r = rng::stream(seed, "kmeans");
    let mut centres = vec![pts[r.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centres[0])).collect();
    while centres.len() < m {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = r.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            // guard against landing on a zero-weight point through rounding
            if d2[pick] == 0.0 {
                pick = d2.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
            }
            pick
        } else {
            r.random_range(0..n)
        };
        let c = pts[next].clone();
        for (dd, p) in d2.iter_mut().zip(&pts) {
            *dd = dd.min(sq_dist(p, &c));
        }
        centres.push(c);
    }
    let d = x.ncols();
    for _ in 0..LLOYD_ITERATIONS {
        let mut sums = vec![vec![0.0; d]; m];
        let mut counts = vec![0usize; m];
        for p in &pts {
            let k = (0..m)
                .min_by(|&a, &b| sq_dist(p, &centres[a]).total_cmp(&sq_dist(p, &centres[b])))
                .unwrap();
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(p) {
                *s += v;
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                centres[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }
    Ok(DMatrix::from_fn(m, d, |i, j| centres[i][j]))
}

/// Median pairwise Euclidean distance over a seeded subsample.
pub fn median_heuristic(x: &DMatrix<f64>, subsample: usize, seed: u64) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Parameter("median heuristic needs at least two points".into()));
    }
    let k = subsample.clamp(2, n);
    let mut idx: Vec<usize> = if k == n {
        (0..n).collect()
    } else {
        sample(&mut rng::stream(seed, "median"), n, k).into_vec()
    };
    idx.sort_unstable();
    let pts: Vec<Vec<f64>> = idx.iter().map(|&i| x.row(i).iter().copied().collect()).collect();
    let mut dists = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in i + 1..k {
            dists.push(sq_dist(&pts[i], &pts[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let h = dists.len();
    Ok(if h % 2 == 1 {
        dists[h / 2]
    } else {
        0.5 * (dists[h / 2 - 1] + dists[h / 2])
    })
}

/// Principal directions of `x` (columns standardized first), dealt
/// round-robin by decreasing eigenvalue into `j` groups. Directions with
/// negligible variance are dropped; the second value lists warnings.
pub fn pca_directions(x: &DMatrix<f64>, j: usize) -> Result<(Vec<Vec<Vec<f64>>>, Vec<String>)> {
    let (n, d) = (x.nrows(), x.ncols());
    if j == 0 || j > d {
        return Err(Error::Parameter(format!("cannot form {j} PCA groups in dimension {d}")));
    }
    if n < 2 {
        return Err(Error::Parameter("PCA needs at least two points".into()));
    }
    let mut z = x.clone();
    for c in 0..d {
        let mean = z.column(c).mean();
        let std = (z.column(c).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        let std = if std > 0.0 { std } else { 1.0 };
        z.column_mut(c).iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
    let cov = z.transpose() * &z / n as f64;
    let eig = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let mut warnings = Vec::new();
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| eig.eigenvalues[k] > 1e-12 * top)
        .collect();
    if kept.len() < d {
        warnings.push(format!("covariance has rank {} < {d}; using available directions", kept.len()));
    }
    let mut groups = vec![Vec::new(); j];
    for (rank, &k) in kept.iter().enumerate() {
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        if let Some(first) = v.iter().find(|c| c.abs() > 1e-12) {
            if *first < 0.0 {
                v.iter_mut().for_each(|c| *c = -*c);
            }
        }
        groups[rank % j].push(v);
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::Numerical("too few non-degenerate directions for the requested groups".into()));
    }
    Ok((groups, warnings))
}

/// One reflection transform per PCA group.
pub fn pca_negations(x: &DMatrix<f64>, j: usize) -> Result<Vec<CyclicTransform>> {
    let (groups, _) = pca_directions(x, j)?;
    groups.into_iter().map(CyclicTransform::pca_negation).collect()
}
