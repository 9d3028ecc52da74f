//! Observation models and their Gaussian expectations.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const GH_NODES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianLikelihood {
    pub noise_variance: f64,
}

/// Probit link, labels in `{0, 1}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BernoulliLikelihood;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Likelihood {
    Gaussian(GaussianLikelihood),
    Bernoulli(BernoulliLikelihood),
}

/// `E_q[log p(y|f)]` for `f ~ N(mean, var)` and its partial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpectedLogLik {
    pub value: f64,
    pub d_mean: f64,
    pub d_var: f64,
    /// Derivative with respect to the log noise variance (zero for Bernoulli).
    pub d_log_noise: f64,
}

impl Likelihood {
    pub fn gaussian(noise_variance: f64) -> Result<Self> {
        let l = Likelihood::Gaussian(GaussianLikelihood { noise_variance });
        l.validate()?;
        Ok(l)
    }

    pub fn bernoulli() -> Self {
        Likelihood::Bernoulli(BernoulliLikelihood)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Likelihood::Gaussian(g) if !(g.noise_variance > 0.0 && g.noise_variance.is_finite()) => {
                Err(Error::Parameter(format!(
                    "noise variance must be positive, got {}",
                    g.noise_variance
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn noise_variance(&self) -> Option<f64> {
        match self {
            Likelihood::Gaussian(g) => Some(g.noise_variance),
            Likelihood::Bernoulli(_) => None,
        }
    }

    pub fn num_hyper(&self) -> usize {
        match self {
            Likelihood::Gaussian(_) => 1,
            Likelihood::Bernoulli(_) => 0,
        }
    }

    pub fn hyper(&self) -> Vec<f64> {
        match self {
            Likelihood::Gaussian(g) => vec![g.noise_variance.ln()],
            Likelihood::Bernoulli(_) => Vec::new(),
        }
    }

    pub fn set_hyper(&mut self, h: &[f64]) {
        if let Likelihood::Gaussian(g) = self {
            g.noise_variance = h[0].exp();
        }
    }

    pub fn check_targets(&self, y: &[f64]) -> Result<()> {
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite target at row {i}")));
        }
        if let Likelihood::Bernoulli(_) = self {
            if let Some(i) = y.iter().position(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Data(format!(
                    "binary target expected at row {i}, got {}",
                    y[i]
                )));
            }
        }
        Ok(())
    }

    pub fn expected_log_lik(&self, y: f64, mean: f64, var: f64) -> ExpectedLogLik {
        match self {
            Likelihood::Gaussian(g) => {
                let s2 = g.noise_variance;
                let r = y - mean;
                let q = r * r + var;
                ExpectedLogLik {
                    value: -0.5 * (LN_2PI + s2.ln()) - q / (2.0 * s2),
                    d_mean: r / s2,
                    d_var: -0.5 / s2,
                    d_log_noise: -0.5 + q / (2.0 * s2),
                }
            }
            Likelihood::Bernoulli(_) => {
                let sign = 2.0 * y - 1.0;
                let var = var.max(1e-12);
                let sd = (2.0 * var).sqrt();
                let (nodes, weights) = gauss_hermite();
                let mut out = ExpectedLogLik {
                    value: 0.0,
                    d_mean: 0.0,
                    d_var: 0.0,
                    d_log_noise: 0.0,
                };
                for (&xi, &w) in nodes.iter().zip(weights) {
                    let z = sign * (mean + sd * xi);
                    let g = sign * inv_mills(z);
                    out.value += w * log_ndtr(z);
                    out.d_mean += w * g;
                    out.d_var += w * g * xi / sd;
                }
                out
            }
        }
    }

    /// Predictive distribution of `y`: `(mean, variance)` for Gaussian
    /// (noise included), `(p(y=1), p(1−p))` for Bernoulli.
    pub fn predictive(&self, mean: f64, var: f64) -> (f64, f64) {
        match self {
            Likelihood::Gaussian(g) => (mean, var + g.noise_variance),
            Likelihood::Bernoulli(_) => {
                let p = ndtr(mean / (1.0 + var).sqrt());
                (p, p * (1.0 - p))
            }
        }
    }
}

/// Nodes and weights (divided by √π) of the 20-point Gauss–Hermite rule for
/// `∫ e^{−x²} f(x) dx`, from the eigen-decomposition of the Jacobi matrix.
pub fn gauss_hermite() -> (&'static [f64], &'static [f64]) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    let (n, w) = RULE.get_or_init(|| {
        let n = GH_NODES;
        let jacobi = DMatrix::from_fn(n, n, |i, j| {
            if i + 1 == j || j + 1 == i {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        pairs.into_iter().unzip()
    });
    (n, w)
}

/// Standard normal CDF.
pub fn ndtr(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn log_npdf(z: f64) -> f64 {
    -0.5 * (LN_2PI + z * z)
}

/// `log Φ(z)`, accurate in the far left tail.
pub fn log_ndtr(z: f64) -> f64 {
    if z > -30.0 {
        ndtr(z).ln()
    } else {
        let z2 = z * z;
        log_npdf(z) - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// `φ(z)/Φ(z)`.
fn inv_mills(z: f64) -> f64 {
    (log_npdf(z) - log_ndtr(z)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn hermite_rule_moments() {
        let (x, w) = gauss_hermite();
        assert_eq!(x.len(), 20);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-13);
        // E[ξ²] = 1/2 under e^{-x²}/√π
        let m2: f64 = x.iter().zip(w).map(|(a, b)| a * a * b).sum();
        assert_relative_eq!(m2, 0.5, epsilon = 1e-13);
        let m8: f64 = x.iter().zip(w).map(|(a, b)| a.powi(8) * b).sum();
        assert_relative_eq!(m8, 105.0 / 16.0, epsilon = 1e-11);
    }

    #[test]
    fn gaussian_expected_log_lik() {
        let l = Likelihood::gaussian(1.0).unwrap();
        let e = l.expected_log_lik(1.0, 0.0, 1.0);
        assert_relative_eq!(e.value, -1.9189385332046727, epsilon = 1e-14);
        assert!(Likelihood::gaussian(0.0).is_err());
    }

    #[test]
    fn probit_tail_is_finite() {
        assert_relative_eq!(log_ndtr(0.0), 0.5f64.ln(), epsilon = 1e-15);
        let a = log_ndtr(-29.999);
        let b = log_ndtr(-30.001);
        assert!((a - b).abs() < 0.07 && b < a);
        assert!(inv_mills(-40.0).is_finite());
        assert_relative_eq!(inv_mills(-40.0), 40.0, max_relative = 1e-3);
    }

    #[test]
    fn bernoulli_zero_variance_limit() {
        let l = Likelihood::bernoulli();
        let e = l.expected_log_lik(1.0, 0.3, 1e-14);
        assert_relative_eq!(e.value, ndtr(0.3).ln(), epsilon = 1e-6);
    }

    #[test]
    fn bernoulli_derivatives() {
        let l = Likelihood::bernoulli();
        for &(y, m, v) in &[(1.0, 0.4, 0.7), (0.0, -1.2, 2.5), (1.0, -3.0, 0.1)] {
            let e = l.expected_log_lik(y, m, v);
            let h = 1e-6;
            let dm = (l.expected_log_lik(y, m + h, v).value - l.expected_log_lik(y, m - h, v).value)
                / (2.0 * h);
            let dv = (l.expected_log_lik(y, m, v + h).value - l.expected_log_lik(y, m, v - h).value)
                / (2.0 * h);
            assert_relative_eq!(e.d_mean, dm, max_relative = 1e-6);
            assert_relative_eq!(e.d_var, dv, max_relative = 1e-6);
        }
    }
}
