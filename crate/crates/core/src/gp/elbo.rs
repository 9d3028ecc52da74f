//! Evidence lower bound, KL terms and analytic gradients.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::model::{HvgpModel, InducingGroup};
use crate::gp::predict::{chain_inducing, col_dots, cross_cov, input_orbits, kuu_factor, Orbits};
use crate::hkd::HarmonicPart;
use crate::linalg::{cholesky_jittered, rows};

/// `KL(N(mu, L Lᵀ) ‖ N(0, Kuu))`.
pub fn kl_gaussian(mu: &DVector<f64>, l: &DMatrix<f64>, kuu: &DMatrix<f64>) -> Result<f64> {
    let m = mu.len();
    if l.nrows() != m || l.ncols() != m || kuu.nrows() != m || kuu.ncols() != m {
        return Err(Error::Shape("KL arguments have inconsistent sizes".into()));
    }
    if (0..m).any(|i| !(l[(i, i)] > 0.0)) {
        return Err(Error::Parameter("Cholesky factor needs a positive diagonal".into()));
    }
    let (chol, _) = cholesky_jittered(kuu, 0.0)?;
    Ok(kl_from_factor(&chol, mu, l))
}

fn kl_from_factor(chol: &Cholesky<f64, Dyn>, mu: &DVector<f64>, l: &DMatrix<f64>) -> f64 {
    let lk = chol.l_dirty();
    let lk = lk.lower_triangle();
    let m = mu.len() as f64;
    let w = lk.solve_lower_triangular(l).expect("triangular");
    let v = lk.solve_lower_triangular(mu).expect("triangular");
    let logdet_k: f64 = lk.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    let logdet_s: f64 = l.diagonal().iter().map(|d| 2.0 * d.ln()).sum();
    0.5 * (w.norm_squared() + v.norm_squared() - m + logdet_k - logdet_s)
}

/// Gradient of one inducing group in the unconstrained parameterization.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupGrad {
    pub z: DMatrix<f64>,
    pub mu: DVector<f64>,
    /// Lower triangle; diagonal entries are with respect to the
    /// softplus-inverted diagonal of `L`.
    pub l: DMatrix<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElboGrad {
    pub groups: Vec<GroupGrad>,
    /// Log-lengthscales then log-variance.
    pub kernel: Vec<f64>,
    /// Log noise variance (Gaussian likelihood only).
    pub likelihood: Vec<f64>,
}

impl ElboGrad {
    /// Flattened in the layout of [`HvgpModel::params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.groups {
            for i in 0..g.z.nrows() {
                out.extend(g.z.row(i).iter());
            }
            out.extend(g.mu.iter());
            for i in 0..g.l.nrows() {
                for j in 0..=i {
                    out.push(g.l[(i, j)]);
                }
            }
        }
        out.extend(&self.kernel);
        out.extend(&self.likelihood);
        out
    }
}

struct Forward {
    kuu: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    a: DMatrix<f64>,
    mean: DVector<f64>,
    reduction: DVector<f64>,
    kl: f64,
}

fn forward(
    t: usize,
    part: &HarmonicPart,
    group: &InducingGroup,
    jitter: f64,
    orbits: &Orbits,
) -> Result<Forward> {
    let (kuu, chol) = kuu_factor(part, group, jitter, t)?;
    let kuf = cross_cov(part, &group.z, orbits);
    let a = chol.solve(&kuf);
    let mean = a.transpose() * &group.mu;
    let la = group.l.transpose() * &a;
    let reduction = col_dots(&kuf, &a) - col_dots(&la, &la);
    let kl = kl_from_factor(&chol, &group.mu, &group.l);
    Ok(Forward {
        kuu,
        chol,
        a,
        mean,
        reduction,
        kl,
    })
}

fn check_batch(model: &HvgpModel, x: &DMatrix<f64>, y: &DVector<f64>, n: usize) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "{} inputs but {} targets",
            x.nrows(),
            y.len()
        )));
    }
    if n < x.nrows() {
        return Err(Error::Parameter(format!(
            "dataset size {n} is smaller than the batch {}",
            x.nrows()
        )));
    }
    model.likelihood().check_targets(y.as_slice())
}

/// `(N/B) Σ_batch E_q[log p(y_i | f_i)] − Σ_t KL(q_t ‖ p_t)`.
pub fn elbo<M: AsRef<HvgpModel>>(
    model: &M,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n: usize,
) -> Result<f64> {
    evaluate(model.as_ref(), x, y, n, false).map(|(v, _)| v)
}

/// ELBO and its gradient with respect to [`HvgpModel::params`].
pub fn elbo_grad<M: AsRef<HvgpModel>>(
    model: &M,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n: usize,
) -> Result<(f64, ElboGrad)> {
    evaluate(model.as_ref(), x, y, n, true).map(|(v, g)| (v, g.expect("gradient requested")))
}

fn evaluate(
    model: &HvgpModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n: usize,
    want_grad: bool,
) -> Result<(f64, Option<ElboGrad>)> {
    check_batch(model, x, y, n)?;
    let orbits = input_orbits(model, x)?;
    let xr = rows(x);
    let b = xr.len();
    let scale = n as f64 / b as f64;
    let jitter = model.jitter();
    let fwd: Vec<Forward> = model
        .parts()
        .par_iter()
        .zip(model.groups().par_iter())
        .enumerate()
        .map(|(t, (p, g))| forward(t, p, g, jitter, &orbits))
        .collect::<Result<_>>()?;

    let kernel = model.kernel();
    let mut mean = DVector::zeros(b);
    let mut var = DVector::from_iterator(b, xr.iter().map(|r| kernel.eval_real(r, r)));
    let mut kl = 0.0;
    for f in &fwd {
        mean += &f.mean;
        var -= &f.reduction;
        kl += f.kl;
    }
    let lik = model.likelihood();
    let mut ell = 0.0;
    let mut dm = DVector::zeros(b);
    let mut dv = DVector::zeros(b);
    let mut d_noise = 0.0;
    for i in 0..b {
        let e = lik.expected_log_lik(y[i], mean[i], var[i]);
        ell += e.value;
        dm[i] = scale * e.d_mean;
        dv[i] = scale * e.d_var;
        d_noise += scale * e.d_log_noise;
    }
    let value = scale * ell - kl;
    if !value.is_finite() {
        return Err(Error::Numerical(format!("ELBO evaluated to {value}")));
    }
    if !want_grad {
        return Ok((value, None));
    }

    let nh = kernel.num_hyper();
    let per_group: Vec<(GroupGrad, Vec<f64>)> = model
        .parts()
        .par_iter()
        .zip(model.groups().par_iter())
        .zip(fwd.par_iter())
        .map(|((part, group), f)| backward(part, group, f, &orbits, &dm, &dv, nh))
        .collect();

    let mut gh = vec![0.0; nh];
    if nh > 0 {
        for (i, r) in xr.iter().enumerate() {
            kernel.accumulate_grad(r, r, dv[i], None, None, Some(&mut gh));
        }
    }
    let mut groups = Vec::with_capacity(per_group.len());
    for (g, h) in per_group {
        for (a, b) in gh.iter_mut().zip(&h) {
            *a += b;
        }
        groups.push(g);
    }
    let likelihood = if lik.num_hyper() > 0 { vec![d_noise] } else { Vec::new() };
    Ok((
        value,
        Some(ElboGrad {
            groups,
            kernel: gh,
            likelihood,
        }),
    ))
}

fn backward(
    part: &HarmonicPart,
    group: &InducingGroup,
    f: &Forward,
    orbits: &Orbits,
    dm: &DVector<f64>,
    dv: &DVector<f64>,
    nh: usize,
) -> (GroupGrad, Vec<f64>) {
    let m = group.len();
    let kinv = f.chol.inverse();
    let s = group.s();
    let kinv_mu = f.chol.solve(&group.mu);

    let mut a_dv = f.a.clone();
    for (j, mut col) in a_dv.column_iter_mut().enumerate() {
        col *= dv[j];
    }
    let p = &a_dv * f.a.transpose();

    let g_mu = &f.a * dm - &kinv_mu;

    // S = L Lᵀ; the ½S⁻¹ term contributes only 1/L_ii on the diagonal.
    let g_lfull = (&p - &kinv * 0.5) * &group.l * 2.0;
    let mut g_l = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..=i {
            g_l[(i, j)] = g_lfull[(i, j)];
        }
        let lii = group.l[(i, i)];
        g_l[(i, i)] = (g_l[(i, i)] + 1.0 / lii) * -(-lii).exp_m1();
    }

    let g_a = &group.mu * dm.transpose() + (&s - &f.kuu) * &a_dv * 2.0;
    let g_kuf = f.chol.solve(&g_a);
    let ks_k = &kinv * &s * &kinv;
    let g_k = -(&g_kuf * f.a.transpose()) - &p
        + (ks_k + &kinv_mu * kinv_mu.transpose() - &kinv) * 0.5;
    let g_ksym = (&g_k + g_k.transpose()) * 0.5;

    let (gz, gh) = chain_inducing(part, &group.z, orbits, &g_kuf, &g_ksym, nh);
    (
        GroupGrad {
            z: gz,
            mu: g_mu,
            l: g_l,
        },
        gh,
    )
}

/// Per-group KL terms.
pub fn kl_terms<M: AsRef<HvgpModel>>(model: &M) -> Result<Vec<f64>> {
    let model = model.as_ref();
    model
        .parts()
        .iter()
        .zip(model.groups())
        .enumerate()
        .map(|(t, (p, g))| {
            let (_, chol) = kuu_factor(p, g, model.jitter(), t)?;
            Ok(kl_from_factor(&chol, &g.mu, &g.l))
        })
        .collect()
}
