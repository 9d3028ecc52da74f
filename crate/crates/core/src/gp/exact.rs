//! Exact GP regression under Gaussian noise.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::cholesky_jittered;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check(x: &DMatrix<f64>, y: &DVector<f64>, noise: f64) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Shape("exact GP needs at least one training point".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if !(noise > 0.0) {
        return Err(Error::Parameter(format!("noise variance must be positive, got {noise}")));
    }
    Ok(())
}

/// Posterior mean and covariance of `f(Xstar)`.
pub fn exact_gp_posterior(
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise: f64,
    xstar: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check(x, y, noise)?;
    let mut kff = kernel.gram_real(x, x)?;
    for i in 0..kff.nrows() {
        kff[(i, i)] += noise;
    }
    let (chol, _) = cholesky_jittered(&kff, 0.0)?;
    let ksf = kernel.gram_real(xstar, x)?;
    let kss = kernel.gram_real(xstar, xstar)?;
    let mean = &ksf * chol.solve(y);
    let v = chol.l().solve_lower_triangular(&ksf.transpose()).expect("triangular");
    let cov = kss - v.transpose() * v;
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok((mean, cov))
}

/// `log N(y; 0, K + σ²I)`.
pub fn exact_log_evidence(
    kernel: &Kernel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    noise: f64,
) -> Result<f64> {
    check(x, y, noise)?;
    let mut k = kernel.gram_real(x, x)?;
    for i in 0..k.nrows() {
        k[(i, i)] += noise;
    }
    let (chol, _) = cholesky_jittered(&k, 0.0)?;
    let alpha = chol.l().solve_lower_triangular(y).expect("triangular");
    let logdet: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    Ok(-0.5 * (alpha.norm_squared() + logdet + y.len() as f64 * LN_2PI))
}
