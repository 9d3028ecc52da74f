//! Predictive distributions of the sparse models.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::model::{group_err, HvgpModel, InducingGroup, SvgpModel};
use crate::hkd::HarmonicPart;
use crate::linalg::{cholesky_jittered, rows};

/// Mean and variance of the latent function at each test input.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

/// Additive contribution of one harmonic part: `f_t` has mean `mean` and
/// variance `var`; the parts are independent under `q`, so both sum to the
/// totals.
#[derive(Clone, Debug, PartialEq)]
pub struct PartPrediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HvgpPrediction {
    pub mean: DVector<f64>,
    pub var: DVector<f64>,
    pub parts: Vec<PartPrediction>,
}

pub(crate) type Orbits = Vec<Vec<Vec<f64>>>;

pub(crate) fn input_orbits(model: &HvgpModel, x: &DMatrix<f64>) -> Result<Orbits> {
    if x.ncols() != model.input_dim() {
        return Err(Error::Shape(format!(
            "inputs have dimension {}, model expects {}",
            x.ncols(),
            model.input_dim()
        )));
    }
    Ok(rows(x)
        .iter()
        .map(|r| model.symmetry().orbit_unchecked(r))
        .collect())
}

/// `[k_t(z_a, x_i)]` given the orbits of the `x_i`.
pub(crate) fn cross_cov(part: &HarmonicPart, z: &DMatrix<f64>, orbits: &Orbits) -> DMatrix<f64> {
    let zr = rows(z);
    DMatrix::from_fn(zr.len(), orbits.len(), |a, i| {
        part.eval_orbit_real(&zr[a], &orbits[i])
    })
}

/// `K_{t,uu} + jitter·I` and its factor.
pub(crate) fn kuu_factor(
    part: &HarmonicPart,
    group: &InducingGroup,
    jitter: f64,
    t: usize,
) -> Result<(DMatrix<f64>, Cholesky<f64, Dyn>)> {
    let kuu = part.gram_real(&group.z, &group.z)?;
    let (chol, used) = cholesky_jittered(&kuu, jitter).map_err(|e| group_err(t, e))?;
    let mut k = kuu;
    for i in 0..k.nrows() {
        k[(i, i)] += used;
    }
    Ok((k, chol))
}

/// Chains `G_uf = ∂/∂K_uf` (m×n, columns aligned with `orbits`) and a
/// symmetric `G_uu = ∂/∂K_uu` to the inducing inputs and, when `nh > 0`,
/// to the base-kernel hyperparameters.
pub(crate) fn chain_inducing(
    part: &HarmonicPart,
    z: &DMatrix<f64>,
    orbits: &Orbits,
    g_uf: &DMatrix<f64>,
    g_uu: &DMatrix<f64>,
    nh: usize,
) -> (DMatrix<f64>, Vec<f64>) {
    let (m, d) = (z.nrows(), z.ncols());
    let zr = rows(z);
    let mut gz = DMatrix::zeros(m, d);
    let mut gh = vec![0.0; nh];
    let mut buf = vec![0.0; d];
    let mut sym = vec![0.0; d];
    let weights: Vec<(usize, f64)> = part
        .weights()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.re != 0.0)
        .map(|(s, w)| (s, w.re))
        .collect();
    let base = part.base();
    let z_orbits: Orbits = zr.iter().map(|z| part.orbit(z)).collect();
    for a in 0..m {
        buf.iter_mut().for_each(|v| *v = 0.0);
        sym.iter_mut().for_each(|v| *v = 0.0);
        for (i, orbit) in orbits.iter().enumerate() {
            let c = g_uf[(a, i)];
            if c == 0.0 {
                continue;
            }
            for &(s, w) in &weights {
                base.accumulate_grad(&zr[a], &orbit[s], c * w, Some(&mut buf), None, (nh > 0).then_some(&mut gh[..]));
            }
        }
        // K_uu is symmetric in (z_a, z_b), so the z_b-derivative of entry
        // (a, b) equals the first-argument derivative of entry (b, a).
        for (b, orbit) in z_orbits.iter().enumerate() {
            let c = g_uu[(a, b)];
            if c == 0.0 {
                continue;
            }
            for &(s, w) in &weights {
                base.accumulate_grad(&zr[a], &orbit[s], c * w, Some(&mut sym), None, (nh > 0).then_some(&mut gh[..]));
            }
        }
        for j in 0..d {
            gz[(a, j)] = buf[j] + 2.0 * sym[j];
        }
    }
    (gz, gh)
}

/// Column sums of the elementwise product.
pub(crate) fn col_dots(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(a.ncols(), (0..a.ncols()).map(|j| a.column(j).dot(&b.column(j))))
}

pub fn hvgp_predict(model: &HvgpModel, xstar: &DMatrix<f64>) -> Result<HvgpPrediction> {
    let orbits = input_orbits(model, xstar)?;
    let xr = rows(xstar);
    let jitter = model.jitter();
    let per_part: Vec<(PartPrediction, DVector<f64>)> = model
        .parts()
        .par_iter()
        .zip(model.groups().par_iter())
        .enumerate()
        .map(|(t, (part, group))| {
            let (_, chol) = kuu_factor(part, group, jitter, t)?;
            let kus = cross_cov(part, &group.z, &orbits);
            let a = chol.solve(&kus);
            let mean = a.transpose() * &group.mu;
            let nystrom = col_dots(&kus, &a);
            let la = group.l.transpose() * &a;
            let explained = col_dots(&la, &la);
            let prior = DVector::from_iterator(
                orbits.len(),
                orbits.iter().zip(&xr).map(|(o, x)| part.eval_orbit_real(x, o)),
            );
            let var = prior - &nystrom + &explained;
            Ok((PartPrediction { mean, var }, nystrom - explained))
        })
        .collect::<Result<Vec<_>>>()?;
    let p = xr.len();
    let mut mean = DVector::zeros(p);
    let mut var = DVector::from_iterator(p, xr.iter().map(|x| model.kernel().eval_real(x, x)));
    let mut parts = Vec::with_capacity(per_part.len());
    for (pp, reduction) in per_part {
        mean += &pp.mean;
        var -= reduction;
        parts.push(pp);
    }
    Ok(HvgpPrediction { mean, var, parts })
}

/// `mean = K⋆u Kuu⁻¹ μ`, `var = k⋆⋆ + k⋆u Kuu⁻¹ (S − Kuu) Kuu⁻¹ ku⋆`.
pub fn svgp_predict(model: &SvgpModel, xstar: &DMatrix<f64>) -> Result<Prediction> {
    let k = model.kernel();
    if xstar.ncols() != model.z().ncols() {
        return Err(Error::Shape("test inputs do not match the inducing dimension".into()));
    }
    let kuu = k.gram_real(model.z(), model.z())?;
    let (chol, used) = cholesky_jittered(&kuu, model.jitter()).map_err(|e| group_err(0, e))?;
    let kus = k.gram_real(model.z(), xstar)?;
    let a = chol.solve(&kus);
    let mean = a.transpose() * model.mu();
    let mut kuu_j = kuu;
    for i in 0..kuu_j.nrows() {
        kuu_j[(i, i)] += used;
    }
    let s = model.l() * model.l().transpose();
    let middle = (s - kuu_j) * &a;
    let xr = rows(xstar);
    let var = DVector::from_iterator(
        xr.len(),
        xr.iter()
            .enumerate()
            .map(|(i, x)| k.eval_real(x, x) + a.column(i).dot(&middle.column(i))),
    );
    Ok(Prediction { mean, var })
}

/// Prediction with a joint Gaussian over the stacked inducing variables of
/// all groups (`mu`, `s` of size `Σ_t m_t`), allowing cross-group covariance.
pub fn joint_hvgp_predict(
    model: &HvgpModel,
    mu: &DVector<f64>,
    s: &DMatrix<f64>,
    xstar: &DMatrix<f64>,
) -> Result<Prediction> {
    let total = model.num_inducing();
    if mu.len() != total || s.nrows() != total || s.ncols() != total {
        return Err(Error::Shape(format!(
            "joint posterior must have dimension {total}"
        )));
    }
    let orbits = input_orbits(model, xstar)?;
    let p = orbits.len();
    let mut stacked = DMatrix::zeros(total, p);
    let mut reduction = DVector::zeros(p);
    let mut offset = 0;
    for (t, (part, group)) in model.parts().iter().zip(model.groups()).enumerate() {
        let (_, chol) = kuu_factor(part, group, model.jitter(), t)?;
        let kus = cross_cov(part, &group.z, &orbits);
        let a = chol.solve(&kus);
        reduction += col_dots(&kus, &a);
        stacked.rows_mut(offset, group.len()).copy_from(&a);
        offset += group.len();
    }
    let mean = stacked.transpose() * mu;
    let sa = s * &stacked;
    let xr = rows(xstar);
    let var = DVector::from_iterator(
        p,
        (0..p).map(|i| model.kernel().eval_real(&xr[i], &xr[i]) - reduction[i] + stacked.column(i).dot(&sa.column(i))),
    );
    Ok(Prediction { mean, var })
}

/// Latent prediction of either model type.
pub fn predict<M: AsRef<HvgpModel>>(model: &M, xstar: &DMatrix<f64>) -> Result<Prediction> {
    let p = hvgp_predict(model.as_ref(), xstar)?;
    Ok(Prediction {
        mean: p.mean,
        var: p.var,
    })
}
