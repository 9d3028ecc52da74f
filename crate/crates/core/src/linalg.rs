//! Dense linear-algebra helpers shared by the inference and diagnostics code.

use nalgebra::{Cholesky, ComplexField, DMatrix, Dyn};

use crate::error::{Error, Result};

/// Largest jitter, relative to the mean diagonal, tried before giving up.
pub const MAX_RELATIVE_JITTER: f64 = 1e-4;

/// Default starting jitter, relative to the mean diagonal.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-8;

/// Cholesky factor of `k + jitter * I`, escalating the jitter tenfold until
/// it exceeds `MAX_RELATIVE_JITTER` times the mean diagonal. Returns the
/// factor and the jitter that was actually applied.
pub fn cholesky_jittered<T>(k: &DMatrix<T>, jitter: f64) -> Result<(Cholesky<T, Dyn>, f64)>
where
    T: ComplexField<RealField = f64>,
{
    if !k.is_square() {
        return Err(Error::Shape(format!(
            "cholesky of non-square {}x{} matrix",
            k.nrows(),
            k.ncols()
        )));
    }
    let n = k.nrows();
    if n == 0 {
        return Err(Error::Shape("cholesky of empty matrix".into()));
    }
    let mean_diag = (0..n).map(|i| k[(i, i)].clone().real()).sum::<f64>() / n as f64;
    let cap = (MAX_RELATIVE_JITTER * mean_diag.abs()).max(jitter);
    let mut current = jitter.max(0.0);
    loop {
        let mut shifted = k.clone();
        for i in 0..n {
            shifted[(i, i)] += T::from_real(current);
        }
        if let Some(chol) = Cholesky::new(shifted) {
            let ok = (0..n).all(|i| {
                let d = chol.l_dirty()[(i, i)].clone().real();
                d.is_finite() && d > 0.0
            });
            if ok {
                return Ok((chol, current));
            }
        }
        if current >= cap {
            return Err(Error::Numerical(format!(
                "cholesky failed on {n}x{n} matrix with jitter up to {current:e}"
            )));
        }
        current = if current == 0.0 {
            DEFAULT_RELATIVE_JITTER * mean_diag.abs().max(f64::MIN_POSITIVE)
        } else {
            (current * 10.0).min(cap)
        };
    }
}

/// Smallest eigenvalue of a Hermitian (or real symmetric) matrix.
pub fn min_eigenvalue<T>(k: &DMatrix<T>) -> f64
where
    T: ComplexField<RealField = f64>,
{
    let herm = (k + k.adjoint()) * T::from_real(0.5);
    herm.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Rows of an `n x d` matrix as owned vectors.
pub fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}

/// Stacks equal-length rows into an `n x d` matrix.
pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        let k = DMatrix::from_element(3, 3, 1.0);
        let (_, used) = cholesky_jittered(&k, 0.0).unwrap();
        assert!(used > 0.0 && used <= 1e-4);
    }

    #[test]
    fn indefinite_matrix_fails() {
        let k = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_jittered(&k, 1e-8).is_err());
    }

    #[test]
    fn hermitian_min_eigenvalue() {
        let i = Complex::new(0.0, 1.0);
        let one = Complex::new(1.0, 0.0);
        let k = DMatrix::from_row_slice(2, 2, &[one, i, -i, one]);
        assert!(min_eigenvalue(&k).abs() < 1e-12);
    }

    #[test]
    fn softplus_roundtrip() {
        for y in [1e-6, 0.3, 1.0, 5.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }
}
