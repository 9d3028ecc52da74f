//! Numerical validators: Nyström trace error (with inducing-input
//! optimization), orthogonality and PSD checks of the decomposition,
//! block-diagonality of the optimal joint posterior, and the inter-domain
//! interpretation of the harmonic parts.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{chain_inducing, cross_cov, default_jitter};
use crate::hkd::{complex_decomposition, dft_matrix, real_decomposition, HarmonicPart};
use crate::kernels::{Kernel, C64};
use crate::linalg::{cholesky_jittered, min_eigenvalue, rows};
use crate::rng;
use crate::training::{adam_step, AdamState};
use crate::transforms::MultiWayTransform;

fn jitter_or_default(kernel: &Kernel, zs: &[&DMatrix<f64>], jitter: Option<f64>) -> f64 {
    jitter.unwrap_or_else(|| default_jitter(kernel, zs))
}

/// `tr(Kff − Kfu Kuu⁻¹ Kuf)` for a single kernel. `jitter = None` uses the
/// models' default relative jitter.
pub fn nystrom_trace_error(
    kernel: &Kernel,
    x: &DMatrix<f64>,
    z: &DMatrix<f64>,
    jitter: Option<f64>,
) -> Result<f64> {
    let part = HarmonicPart::identity(kernel.clone(), x.ncols());
    harmonic_trace_error(std::slice::from_ref(&part), x, &[z.clone()], jitter)
}

/// `Σ_t tr(K_{t,ff} − K_{t,fu} K_{t,uu}⁻¹ K_{t,uf})`; complex parts are
/// handled with Hermitian algebra.
pub fn harmonic_trace_error(
    parts: &[HarmonicPart],
    x: &DMatrix<f64>,
    zs: &[DMatrix<f64>],
    jitter: Option<f64>,
) -> Result<f64> {
    check_parts(parts, x, zs)?;
    let jitter = jitter_or_default(parts[0].base(), &zs.iter().collect::<Vec<_>>(), jitter);
    let xr = rows(x);
    let per_part: Vec<f64> = parts
        .par_iter()
        .zip(zs)
        .enumerate()
        .map(|(t, (part, z))| {
            let diag: f64 = xr.iter().map(|r| part.eval_orbit(r, &part.orbit(r)).re).sum();
            let explained = if part.is_real() {
                let kuu = part.gram_real(z, z)?;
                let (chol, _) = cholesky_jittered(&kuu, jitter).map_err(|e| wrap(t, e))?;
                let kuf = part.gram_real(z, x)?;
                chol.l().solve_lower_triangular(&kuf).expect("triangular").norm_squared()
            } else {
                let kuu = part.gram(z, z)?;
                let (chol, _) = cholesky_jittered(&kuu, jitter).map_err(|e| wrap(t, e))?;
                let kuf = part.gram(z, x)?;
                chol.l().solve_lower_triangular(&kuf).expect("triangular").norm_squared()
            };
            Ok(diag - explained)
        })
        .collect::<Result<_>>()?;
    Ok(per_part.iter().sum())
}

fn wrap(t: usize, e: Error) -> Error {
    match e {
        Error::Numerical(reason) => Error::GroupCholesky { group: t, reason },
        other => other,
    }
}

fn check_parts(parts: &[HarmonicPart], x: &DMatrix<f64>, zs: &[DMatrix<f64>]) -> Result<()> {
    if parts.is_empty() || parts.len() != zs.len() {
        return Err(Error::Shape(format!(
            "{} parts but {} inducing sets",
            parts.len(),
            zs.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Shape("trace error needs at least one input".into()));
    }
    for z in zs {
        if z.nrows() == 0 {
            return Err(Error::Shape("inducing set is empty".into()));
        }
        if z.ncols() != x.ncols() {
            return Err(Error::Shape("inducing and data dimensions differ".into()));
        }
    }
    Ok(())
}

/// Trace error of real parts and its gradient with respect to each `Z_t`.
pub fn harmonic_trace_error_grad(
    parts: &[HarmonicPart],
    x: &DMatrix<f64>,
    zs: &[DMatrix<f64>],
    jitter: f64,
) -> Result<(f64, Vec<DMatrix<f64>>)> {
    check_parts(parts, x, zs)?;
    if parts.iter().any(|p| !p.is_real()) {
        return Err(Error::Unsupported("trace-error gradient needs real parts".into()));
    }
    let xr = rows(x);
    let orbits: Vec<Vec<Vec<f64>>> = xr.iter().map(|r| parts[0].orbit(r)).collect();
    let per_part: Vec<(f64, DMatrix<f64>)> = parts
        .par_iter()
        .zip(zs)
        .enumerate()
        .map(|(t, (part, z))| {
            let diag: f64 = xr.iter().zip(&orbits).map(|(r, o)| part.eval_orbit_real(r, o)).sum();
            let kuu = part.gram_real(z, z)?;
            let (chol, _) = cholesky_jittered(&kuu, jitter).map_err(|e| wrap(t, e))?;
            let kuf = cross_cov(part, z, &orbits);
            let a = chol.solve(&kuf);
            let g_uf = &a * -2.0;
            let g_uu = &a * a.transpose();
            let (gz, _) = chain_inducing(part, z, &orbits, &g_uf, &g_uu, 0);
            Ok((diag - kuf.dot(&a), gz))
        })
        .collect::<Result<_>>()?;
    let total = per_part.iter().map(|(v, _)| v).sum();
    Ok((total, per_part.into_iter().map(|(_, g)| g).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceOptConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TraceOptConfig {
    fn default() -> Self {
        TraceOptConfig {
            iterations: 150,
            batch_size: 500,
            learning_rate: 0.01,
            seed: 0,
        }
    }
}

/// Minimizes the (minibatch, rescaled) trace error over the inducing inputs
/// with Adam; kernel hyperparameters stay fixed.
pub fn optimize_trace_error(
    parts: &[HarmonicPart],
    x: &DMatrix<f64>,
    zs: Vec<DMatrix<f64>>,
    jitter: f64,
    config: &TraceOptConfig,
) -> Result<Vec<DMatrix<f64>>> {
    check_parts(parts, x, &zs)?;
    let n = x.nrows();
    let batch = config.batch_size.clamp(1, n);
    let mut zs = zs;
    let sizes: Vec<usize> = zs.iter().map(|z| z.len()).collect();
    let mut flat: Vec<f64> = zs.iter().flat_map(|z| z.iter().copied()).collect();
    let mut adam = AdamState::new(flat.len());
    let mut r = rng::stream(config.seed, "trace-opt");
    let mut order: Vec<usize> = (0..n).collect();
    let mut pos = n;
    for _ in 0..config.iterations {
        if pos + batch > n {
            order.shuffle(&mut r);
            pos = 0;
        }
        let idx = &order[pos..pos + batch];
        pos += batch;
        let xb = x.select_rows(idx);
        let (_, grads) = harmonic_trace_error_grad(parts, &xb, &zs, jitter)?;
        let g: Vec<f64> = grads.iter().flat_map(|g| g.iter().copied()).collect();
        adam_step(&mut adam, &mut flat, &g, config.learning_rate)?;
        let mut off = 0;
        for (z, &len) in zs.iter_mut().zip(&sizes) {
            z.as_mut_slice().copy_from_slice(&flat[off..off + len]);
            off += len;
        }
    }
    Ok(zs)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub num_parts: usize,
    /// Parts that are not identically zero on the probes.
    pub nonzero_parts: usize,
    /// `|k_t(x, G_j x') − e^{i2πt_j/T_j} k_t(x, x')|` over factors `j`.
    pub max_shift_residual: f64,
    /// `|Σ_{s,s'} Fᴴ_{t1,s} F_{t2,s'} k(G^s x, G^{s'} x')|` for `t1 ≠ t2`.
    pub max_cross_frequency_residual: f64,
    /// Same quadratic form with `t1 = t2` against `k_t(x, x')`.
    pub max_quadratic_form_residual: f64,
    /// `|k_t(G^j x, G^{j'} x) − e^{−i2πt·(j−j')/T} k_t(x, x)|`.
    pub max_orbit_covariance_residual: f64,
    /// `|Σ_t k_t − k|` over all probe pairs, complex and real-resolved.
    pub max_decomposition_residual: f64,
    /// Largest imaginary part or asymmetry of the real-resolved Grams.
    pub max_real_part_residual: f64,
    /// Smallest eigenvalue over all complex and real part Grams.
    pub min_part_eigenvalue: f64,
}

/// Checks the algebraic properties of the decomposition of `base` under `g`
/// on the rows of `x`.
pub fn orthogonality_suite(
    base: &Kernel,
    g: impl Into<MultiWayTransform>,
    x: &DMatrix<f64>,
) -> Result<OrthogonalityReport> {
    let g = g.into();
    let parts = complex_decomposition(base, g.clone())?;
    if x.nrows() < 2 {
        return Err(Error::Shape("orthogonality suite needs at least two probes".into()));
    }
    let xr = rows(x);
    let n = xr.len();
    let periods = g.periods();
    let indices = g.multi_indices();
    let tau = 2.0 * std::f64::consts::PI;
    let phase = |t: &[usize], s: &[usize], sign: f64| -> C64 {
        let angle: f64 = t
            .iter()
            .zip(s)
            .zip(&periods)
            .map(|((&ti, &si), &p)| ((ti * si) % p) as f64 / p as f64)
            .sum();
        C64::from_polar(1.0, sign * tau * angle)
    };

    let mut report = OrthogonalityReport {
        num_parts: parts.len(),
        nonzero_parts: 0,
        max_shift_residual: 0.0,
        max_cross_frequency_residual: 0.0,
        max_quadratic_form_residual: 0.0,
        max_orbit_covariance_residual: 0.0,
        max_decomposition_residual: 0.0,
        max_real_part_residual: 0.0,
        min_part_eigenvalue: f64::INFINITY,
    };

    // Grams: decomposition identity, PSD and non-zero count.
    let kgram = base.gram(x, x)?;
    let mut sum = DMatrix::<C64>::zeros(n, n);
    for part in &parts {
        let gram = part.gram(x, x)?;
        if gram.iter().any(|v| v.norm() > 1e-12) {
            report.nonzero_parts += 1;
        }
        report.min_part_eigenvalue = report.min_part_eigenvalue.min(min_eigenvalue(&gram));
        sum += gram;
    }
    report.max_decomposition_residual = (sum - &kgram).iter().map(|v| v.norm()).fold(0.0, f64::max);
    if base.is_real() {
        let real = real_decomposition(base, g.clone())?;
        let mut rsum = DMatrix::<C64>::zeros(n, n);
        for part in &real {
            let gram = part.gram(x, x)?;
            let asym = (&gram - gram.transpose()).iter().map(|v| v.norm()).fold(0.0, f64::max);
            let imag = gram.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
            report.max_real_part_residual = report.max_real_part_residual.max(asym).max(imag);
            report.min_part_eigenvalue = report.min_part_eigenvalue.min(min_eigenvalue(&gram));
            rsum += gram;
        }
        let res = (rsum - &kgram).iter().map(|v| v.norm()).fold(0.0, f64::max);
        report.max_decomposition_residual = report.max_decomposition_residual.max(res);
    }

    // Per-pair identities on (x_i, x_{i+1}).
    let weights: Vec<&[C64]> = parts.iter().map(|p| p.weights()).collect();
    for i in 0..n {
        let (x1, x2) = (&xr[i], &xr[(i + 1) % n]);
        let o1 = g.orbit(x1)?;
        let o2 = g.orbit(x2)?;
        let values: Vec<C64> = parts.iter().map(|p| p.eval_orbit(x1, &o2)).collect();
        for (t, part) in parts.iter().enumerate() {
            let idx = &indices[t];
            for (j, factor) in g.factors().iter().enumerate() {
                let mut unit = vec![0; periods.len()];
                unit[j] = 1;
                let shifted = factor.apply(x2, 1)?;
                let lhs = part.eval_orbit(x1, &g.orbit(&shifted)?);
                let res = (lhs - phase(idx, &unit, 1.0) * values[t]).norm();
                report.max_shift_residual = report.max_shift_residual.max(res);
            }
            let self_val = part.eval_orbit(x1, &o1);
            for s in &indices {
                let gx = g.apply(x1, s)?;
                let og = g.orbit(&gx)?;
                // (G^s x, x) and (x, G^s x)
                let a = part.eval_orbit(&gx, &o1);
                let b = part.eval_orbit(x1, &og);
                let ra = (a - phase(idx, s, -1.0) * self_val).norm();
                let rb = (b - phase(idx, s, 1.0) * self_val).norm();
                report.max_orbit_covariance_residual = report.max_orbit_covariance_residual.max(ra).max(rb);
            }
        }
        // Q[t1, t2] = Σ_{s,s'} conj(F_{t1,s}) F_{t2,s'} k(G^s x, G^{s'} x')
        let big = o1.len();
        let kmat = DMatrix::from_fn(big, big, |s, sp| base.eval_unchecked(&o1[s], &o2[sp]));
        let w = DMatrix::from_fn(parts.len(), big, |t, s| weights[t][s]);
        let q = w.conjugate() * kmat * w.transpose();
        for t1 in 0..parts.len() {
            for t2 in 0..parts.len() {
                if t1 == t2 {
                    let res = (q[(t1, t1)] - values[t1]).norm();
                    report.max_quadratic_form_residual = report.max_quadratic_form_residual.max(res);
                } else {
                    report.max_cross_frequency_residual =
                        report.max_cross_frequency_residual.max(q[(t1, t2)].norm());
                }
            }
        }
    }
    Ok(report)
}

/// Frobenius norm of the off-diagonal `m×m` blocks over that of the
/// diagonal blocks.
pub fn block_offdiag_ratio(s: &DMatrix<f64>, m: usize) -> Result<f64> {
    if !s.is_square() || m == 0 || s.nrows() % m != 0 {
        return Err(Error::Shape(format!(
            "{}x{} matrix does not split into blocks of size {m}",
            s.nrows(),
            s.ncols()
        )));
    }
    let (mut off, mut diag) = (0.0, 0.0);
    for i in 0..s.nrows() {
        for j in 0..s.ncols() {
            let v = s[(i, j)] * s[(i, j)];
            if i / m == j / m {
                diag += v;
            } else {
                off += v;
            }
        }
    }
    if diag == 0.0 {
        return Err(Error::Numerical("diagonal blocks vanish".into()));
    }
    Ok((off / diag).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterDomainReport {
    /// `max |k(x, w_t) − k_t(x, z)|`.
    pub max_cross_residual: f64,
    /// `max |k(w_t, w'_t) − k_t(z, z')|`.
    pub max_inducing_residual: f64,
    /// `max |k(w_t, w'_{t'})|` over `t ≠ t'`.
    pub max_cross_type: f64,
}

/// Compares covariances of the inter-domain variables
/// `w_t(z) = Σ_s conj(F_{t,s}) f(G^s z)`, computed from base-kernel orbit
/// sums with inverse-DFT weights, against the harmonic parts.
pub fn inter_domain_check(
    base: &Kernel,
    g: impl Into<MultiWayTransform>,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
) -> Result<InterDomainReport> {
    let g = g.into();
    let parts = complex_decomposition(base, g.clone())?;
    let periods = g.periods();
    // a[t][s] = conj(F_{t,s}) = (Fᴴ)_{s,t}, tensor product over factors.
    let adj: Vec<DMatrix<C64>> = periods
        .iter()
        .map(|&p| dft_matrix(p).map(|f| f.matrix().adjoint()))
        .collect::<Result<_>>()?;
    let indices = g.multi_indices();
    let a: Vec<Vec<C64>> = indices
        .iter()
        .map(|t| {
            indices
                .iter()
                .map(|s| {
                    adj.iter()
                        .zip(t.iter().zip(s))
                        .map(|(m, (&ti, &si))| m[(si, ti)])
                        .product()
                })
                .collect()
        })
        .collect();
    let zr = rows(z);
    let xr = rows(x);
    let z_orbits: Vec<Vec<Vec<f64>>> = zr.iter().map(|r| g.orbit(r)).collect::<Result<_>>()?;
    let mut report = InterDomainReport {
        max_cross_residual: 0.0,
        max_inducing_residual: 0.0,
        max_cross_type: 0.0,
    };
    for (t, part) in parts.iter().enumerate() {
        for xi in &xr {
            for (zi, zo) in zr.iter().zip(&z_orbits) {
                let raw: C64 = a[t]
                    .iter()
                    .zip(zo)
                    .map(|(w, gz)| w.conj() * base.eval_unchecked(xi, gz))
                    .sum();
                let res = (raw - part.eval(xi, zi)?).norm();
                report.max_cross_residual = report.max_cross_residual.max(res);
            }
        }
    }
    for (ia, oa) in z_orbits.iter().enumerate() {
        for (ib, ob) in z_orbits.iter().enumerate() {
            let kmat = DMatrix::from_fn(oa.len(), ob.len(), |s, sp| base.eval_unchecked(&oa[s], &ob[sp]));
            for t1 in 0..parts.len() {
                for t2 in 0..parts.len() {
                    let mut cov = C64::new(0.0, 0.0);
                    for s in 0..oa.len() {
                        for sp in 0..ob.len() {
                            cov += a[t1][s] * a[t2][sp].conj() * kmat[(s, sp)];
                        }
                    }
                    if t1 == t2 {
                        let res = (cov - parts[t1].eval(&zr[ia], &zr[ib])?).norm();
                        report.max_inducing_residual = report.max_inducing_residual.max(res);
                    } else {
                        report.max_cross_type = report.max_cross_type.max(cov.norm());
                    }
                }
            }
        }
    }
    Ok(report)
}

/// `optimal_s` of the stacked real parts for shared `Z`, with `Λ = I/σ²`.
pub fn stacked_optimal_s(
    parts: &[HarmonicPart],
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    noise: f64,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    let m = z.nrows();
    let total = m * parts.len();
    let mut kuu = DMatrix::zeros(total, total);
    let mut kuf = DMatrix::zeros(total, x.nrows());
    for (t, part) in parts.iter().enumerate() {
        let mut block = part.gram_real(z, z)?;
        for i in 0..m {
            block[(i, i)] += jitter;
        }
        kuu.view_mut((t * m, t * m), (m, m)).copy_from(&block);
        kuf.rows_mut(t * m, m).copy_from(&part.gram_real(z, x)?);
    }
    let lambda = DVector::from_element(x.nrows(), 1.0 / noise);
    crate::gp::optimal_s(&kuu, &kuf, &lambda)
}
