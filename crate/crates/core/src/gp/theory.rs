//! Constructions relating the harmonic model to a standard sparse GP:
//! the optimal posterior covariance, the orbit-point SVGP equivalent to a
//! two-part model, and the Nyström span identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::model::{HvgpModel, SvgpModel};
use crate::hkd::complex_decomposition;
use crate::kernels::{Kernel, C64};
use crate::linalg::{cholesky_jittered, from_rows, rows};
use crate::transforms::MultiWayTransform;

/// `S⋆ = Kuu (Kuu + Kuf Λ Kfu)⁻¹ Kuu` for diagonal `Λ = diag(lambda)`.
pub fn optimal_s(kuu: &DMatrix<f64>, kuf: &DMatrix<f64>, lambda: &DVector<f64>) -> Result<DMatrix<f64>> {
    let m = kuu.nrows();
    if !kuu.is_square() || kuf.nrows() != m || kuf.ncols() != lambda.len() {
        return Err(Error::Shape(format!(
            "optimal_s: Kuu {}x{}, Kuf {}x{}, {} weights",
            kuu.nrows(),
            kuu.ncols(),
            kuf.nrows(),
            kuf.ncols(),
            lambda.len()
        )));
    }
    if lambda.iter().any(|l| !(*l >= 0.0)) {
        return Err(Error::Parameter("likelihood precisions must be non-negative".into()));
    }
    let mut weighted = kuf.clone();
    for (j, mut col) in weighted.column_iter_mut().enumerate() {
        col *= lambda[j];
    }
    let b = kuu + &weighted * kuf.transpose();
    let (chol, _) = cholesky_jittered(&b, 0.0)?;
    let s = kuu * chol.solve(kuu);
    Ok((&s + s.transpose()) * 0.5)
}

/// Stacked `(mu, S)` of a model's independent groups.
pub fn block_posterior(model: &HvgpModel) -> (DVector<f64>, DMatrix<f64>) {
    let total = model.num_inducing();
    let mut mu = DVector::zeros(total);
    let mut s = DMatrix::zeros(total, total);
    let mut off = 0;
    for g in model.groups() {
        let m = g.len();
        mu.rows_mut(off, m).copy_from(&g.mu);
        s.view_mut((off, off), (m, m)).copy_from(&g.s());
        off += m;
    }
    (mu, s)
}

/// SVGP on the orbit points `[Z; G(Z)]` of a two-part model with shared `Z`.
/// The variational Gaussian is the image of the joint `q(u₀, u₁)` under
/// `v = [u₀ + u₁; u₀ − u₁]`; `joint = None` uses the model's independent groups.
pub fn build_orbit_svgp(
    model: &HvgpModel,
    joint: Option<(&DVector<f64>, &DMatrix<f64>)>,
) -> Result<SvgpModel> {
    let sym = model.symmetry();
    if sym.periods() != [2] || model.groups().len() != 2 {
        return Err(Error::Unsupported(
            "orbit SVGP construction needs a single period-2 transform".into(),
        ));
    }
    let z = &model.groups()[0].z;
    if &model.groups()[1].z != z {
        return Err(Error::Unsupported(
            "orbit SVGP construction needs both groups to share Z".into(),
        ));
    }
    let m = z.nrows();
    let (mu, s) = match joint {
        Some((mu, s)) => {
            if mu.len() != 2 * m || s.nrows() != 2 * m || s.ncols() != 2 * m {
                return Err(Error::Shape(format!("joint posterior must have dimension {}", 2 * m)));
            }
            (mu.clone(), s.clone())
        }
        None => block_posterior(model),
    };
    let mut p = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        p[(i, i)] = 1.0;
        p[(i, m + i)] = 1.0;
        p[(m + i, i)] = 1.0;
        p[(m + i, m + i)] = -1.0;
    }
    let mu_v = &p * mu;
    let s_v = &p * s * p.transpose();
    let s_v = (&s_v + s_v.transpose()) * 0.5;
    let (chol, _) = cholesky_jittered(&s_v, 0.0)?;
    let mut zv = rows(z);
    for r in rows(z) {
        zv.push(sym.apply(&r, &[1])?);
    }
    SvgpModel::from_parts(
        model.kernel().clone(),
        from_rows(&zv)?,
        mu_v,
        chol.l(),
        *model.likelihood(),
        2.0 * model.jitter(),
    )
}

/// `(Σ_t K_{t,fu} K_{t,uu}⁻¹ K_{t,uf}, K_{fv} K_{vv}⁻¹ K_{vf})` for complex
/// parts with shared `Z` and the plain kernel on the orbit points of `Z`.
/// Part Grams get `jitter`, the orbit Gram `T·jitter`, which keeps the two
/// exactly related.
pub fn span_nystrom(
    base: &Kernel,
    g: &MultiWayTransform,
    z: &DMatrix<f64>,
    x: &DMatrix<f64>,
    jitter: f64,
) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let n = x.nrows();
    let mut parts_sum = DMatrix::<C64>::zeros(n, n);
    for part in complex_decomposition(base, g.clone())? {
        let kuu = part.gram(z, z)?;
        let (chol, _) = cholesky_jittered(&kuu, jitter)?;
        let kuf = part.gram(z, x)?;
        parts_sum += kuf.adjoint() * chol.solve(&kuf);
    }
    let mut v = Vec::new();
    for r in rows(z) {
        v.extend(g.orbit(&r)?);
    }
    let v = from_rows(&v)?;
    let kvv = base.gram(&v, &v)?;
    let (chol, _) = cholesky_jittered(&kvv, g.orbit_len() as f64 * jitter)?;
    let kvf = base.gram(&v, x)?;
    let orbit = kvf.adjoint() * chol.solve(&kvf);
    Ok((parts_sum, orbit))
}
