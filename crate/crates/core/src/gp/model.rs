//! Sparse variational models: inducing groups, HVGP and SVGP containers,
//! flat parameter packing and JSON checkpoints.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::likelihood::Likelihood;
use crate::hkd::{real_decomposition, HarmonicPart};
use crate::kernels::Kernel;
use crate::linalg::{cholesky_jittered, from_rows, rows, softplus, softplus_inv, DEFAULT_RELATIVE_JITTER};
use crate::transforms::MultiWayTransform;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Inducing inputs `Z` with `q(u) = N(mu, L Lᵀ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InducingGroup {
    pub z: DMatrix<f64>,
    pub mu: DVector<f64>,
    pub l: DMatrix<f64>,
}

impl InducingGroup {
    pub fn new(z: DMatrix<f64>, mu: DVector<f64>, l: DMatrix<f64>) -> Result<Self> {
        let g = InducingGroup { z, mu, l };
        g.validate()?;
        Ok(g)
    }

    /// `q(u) = p(u)`: zero mean and `S = Kuu` (with jitter).
    pub fn at_prior(part: &HarmonicPart, z: DMatrix<f64>, jitter: f64) -> Result<Self> {
        let kuu = part.gram_real(&z, &z)?;
        let (chol, _) = cholesky_jittered(&kuu, jitter)?;
        let m = z.nrows();
        InducingGroup::new(z, DVector::zeros(m), chol.l())
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.z.nrows();
        if m == 0 {
            return Err(Error::Shape("inducing group has no points".into()));
        }
        if self.mu.len() != m || self.l.nrows() != m || self.l.ncols() != m {
            return Err(Error::Shape(format!(
                "inducing group of {m} points has mean of length {} and factor {}x{}",
                self.mu.len(),
                self.l.nrows(),
                self.l.ncols()
            )));
        }
        for i in 0..m {
            if !(self.l[(i, i)] > 0.0) {
                return Err(Error::Parameter(format!(
                    "Cholesky diagonal entry {i} is not positive"
                )));
            }
            for j in i + 1..m {
                if self.l[(i, j)] != 0.0 {
                    return Err(Error::Parameter("Cholesky factor is not lower-triangular".into()));
                }
            }
        }
        if self.z.iter().chain(self.mu.iter()).chain(self.l.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite variational parameter".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.z.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.z.nrows() == 0
    }

    pub fn s(&self) -> DMatrix<f64> {
        &self.l * self.l.transpose()
    }

    fn num_params(&self) -> usize {
        let m = self.len();
        m * self.z.ncols() + m + m * (m + 1) / 2
    }

    fn push_params(&self, out: &mut Vec<f64>) {
        let m = self.len();
        for i in 0..m {
            out.extend(self.z.row(i).iter());
        }
        out.extend(self.mu.iter());
        for i in 0..m {
            for j in 0..i {
                out.push(self.l[(i, j)]);
            }
            out.push(softplus_inv(self.l[(i, i)]));
        }
    }

    fn read_params(&mut self, p: &[f64]) -> usize {
        let (m, d) = (self.len(), self.z.ncols());
        let mut k = 0;
        for i in 0..m {
            for j in 0..d {
                self.z[(i, j)] = p[k];
                k += 1;
            }
        }
        for i in 0..m {
            self.mu[i] = p[k];
            k += 1;
        }
        for i in 0..m {
            for j in 0..i {
                self.l[(i, j)] = p[k];
                k += 1;
            }
            self.l[(i, i)] = softplus(p[k]);
            k += 1;
        }
        k
    }
}

/// Additive sparse GP with one independent inducing group per real-resolved
/// harmonic part. All parts share the base kernel hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct HvgpModel {
    kernel: Kernel,
    symmetry: MultiWayTransform,
    parts: Vec<HarmonicPart>,
    groups: Vec<InducingGroup>,
    likelihood: Likelihood,
    jitter: f64,
}

/// `DEFAULT_RELATIVE_JITTER` times the mean prior variance at the inducing inputs.
pub fn default_jitter(kernel: &Kernel, zs: &[&DMatrix<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for z in zs {
        for r in rows(z) {
            total += kernel.eval_real(&r, &r).abs();
            count += 1;
        }
    }
    let mean = if count == 0 { 1.0 } else { total / count as f64 };
    DEFAULT_RELATIVE_JITTER * mean.max(f64::MIN_POSITIVE)
}

impl HvgpModel {
    /// Model with `q_t` at the prior for each part of the real decomposition
    /// of `kernel` under `symmetry`. `zs` holds one input matrix per part.
    pub fn new(
        kernel: Kernel,
        symmetry: impl Into<MultiWayTransform>,
        zs: Vec<DMatrix<f64>>,
        likelihood: Likelihood,
    ) -> Result<Self> {
        let symmetry = symmetry.into();
        let parts = real_decomposition(&kernel, symmetry.clone())?;
        if zs.len() != parts.len() {
            return Err(Error::Shape(format!(
                "{} parts but {} inducing input sets",
                parts.len(),
                zs.len()
            )));
        }
        let jitter = default_jitter(&kernel, &zs.iter().collect::<Vec<_>>());
        let groups = parts
            .iter()
            .zip(zs)
            .enumerate()
            .map(|(t, (p, z))| {
                check_group_dim(&z, symmetry.input_dim(), t)?;
                InducingGroup::at_prior(p, z, jitter).map_err(|e| group_err(t, e))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::assemble(kernel, symmetry, parts, groups, likelihood, jitter)
    }

    /// Model from explicit variational parameters.
    pub fn from_groups(
        kernel: Kernel,
        symmetry: impl Into<MultiWayTransform>,
        groups: Vec<InducingGroup>,
        likelihood: Likelihood,
        jitter: f64,
    ) -> Result<Self> {
        let symmetry = symmetry.into();
        let parts = if symmetry.factors().is_empty() {
            vec![HarmonicPart::identity(kernel.clone(), symmetry.input_dim())]
        } else {
            real_decomposition(&kernel, symmetry.clone())?
        };
        Self::assemble(kernel, symmetry, parts, groups, likelihood, jitter)
    }

    fn assemble(
        kernel: Kernel,
        symmetry: MultiWayTransform,
        parts: Vec<HarmonicPart>,
        groups: Vec<InducingGroup>,
        likelihood: Likelihood,
        jitter: f64,
    ) -> Result<Self> {
        likelihood.validate()?;
        if parts.len() != groups.len() {
            return Err(Error::Shape(format!(
                "{} parts but {} inducing groups",
                parts.len(),
                groups.len()
            )));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::Parameter(format!("invalid jitter {jitter}")));
        }
        for (t, g) in groups.iter().enumerate() {
            g.validate().map_err(|e| group_err(t, e))?;
            check_group_dim(&g.z, symmetry.input_dim(), t)?;
        }
        Ok(HvgpModel {
            kernel,
            symmetry,
            parts,
            groups,
            likelihood,
            jitter,
        })
    }

    /// Single-part model under the trivial transform, i.e. a plain SVGP.
    pub fn single(kernel: Kernel, group: InducingGroup, likelihood: Likelihood, jitter: f64) -> Result<Self> {
        let d = group.z.ncols();
        kernel.check_input_dim(d)?;
        Self::from_groups(kernel, MultiWayTransform::identity(d), vec![group], likelihood, jitter)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn symmetry(&self) -> &MultiWayTransform {
        &self.symmetry
    }

    pub fn parts(&self) -> &[HarmonicPart] {
        &self.parts
    }

    pub fn groups(&self) -> &[InducingGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [InducingGroup] {
        &mut self.groups
    }

    pub fn likelihood(&self) -> &Likelihood {
        &self.likelihood
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn set_jitter(&mut self, jitter: f64) {
        self.jitter = jitter;
    }

    pub fn input_dim(&self) -> usize {
        self.symmetry.input_dim()
    }

    pub fn set_kernel(&mut self, kernel: Kernel) {
        for p in &mut self.parts {
            p.set_base(kernel.clone());
        }
        self.kernel = kernel;
    }

    pub fn set_likelihood(&mut self, likelihood: Likelihood) {
        self.likelihood = likelihood;
    }

    /// Total number of inducing points.
    pub fn num_inducing(&self) -> usize {
        self.groups.iter().map(|g| g.len()).sum()
    }

    pub fn num_params(&self) -> usize {
        self.groups.iter().map(|g| g.num_params()).sum::<usize>()
            + self.kernel.num_hyper()
            + self.likelihood.num_hyper()
    }

    /// Unconstrained parameters: per group `Z` (row-major), `mu`, the lower
    /// triangle of `L` row by row with softplus-inverted diagonal; then the
    /// log kernel hyperparameters and the log noise variance.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for g in &self.groups {
            g.push_params(&mut p);
        }
        p.extend(self.kernel.hyper());
        p.extend(self.likelihood.hyper());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                p.len()
            )));
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter".into()));
        }
        let mut k = 0;
        for g in &mut self.groups {
            k += g.read_params(&p[k..]);
        }
        let nh = self.kernel.num_hyper();
        if nh > 0 {
            let mut kernel = self.kernel.clone();
            kernel.set_hyper(&p[k..k + nh]);
            self.set_kernel(kernel);
        }
        k += nh;
        self.likelihood.set_hyper(&p[k..]);
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format_version: CHECKPOINT_FORMAT_VERSION,
            kernel: self.kernel.clone(),
            symmetry: self.symmetry.clone(),
            likelihood: self.likelihood,
            jitter: self.jitter,
            groups: self
                .groups
                .iter()
                .map(|g| GroupRecord {
                    z: rows(&g.z),
                    mu: g.mu.iter().copied().collect(),
                    l: rows(&g.l),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        if c.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Unsupported(format!(
                "checkpoint format version {} (expected {CHECKPOINT_FORMAT_VERSION})",
                c.format_version
            )));
        }
        let groups = c
            .groups
            .into_iter()
            .map(|g| {
                let z = from_rows(&g.z)?;
                let l = from_rows(&g.l)?;
                InducingGroup::new(z, DVector::from_vec(g.mu), l)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_groups(c.kernel, c.symmetry, groups, c.likelihood, c.jitter)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

fn check_group_dim(z: &DMatrix<f64>, d: usize, t: usize) -> Result<()> {
    if z.ncols() != d {
        return Err(Error::Shape(format!(
            "inducing group {t} has dimension {}, data has {d}",
            z.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn group_err(t: usize, e: Error) -> Error {
    match e {
        Error::Numerical(reason) => Error::GroupCholesky { group: t, reason },
        other => other,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub z: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub l: Vec<Vec<f64>>,
}

/// Serialized model state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub kernel: Kernel,
    pub symmetry: MultiWayTransform,
    pub likelihood: Likelihood,
    pub jitter: f64,
    pub groups: Vec<GroupRecord>,
}

/// Standard sparse variational GP with a single set of `M` inducing points.
#[derive(Clone, Debug, PartialEq)]
pub struct SvgpModel {
    inner: HvgpModel,
}

impl SvgpModel {
    /// `q(u)` at the prior.
    pub fn new(kernel: Kernel, z: DMatrix<f64>, likelihood: Likelihood) -> Result<Self> {
        kernel.check_input_dim(z.ncols())?;
        let jitter = default_jitter(&kernel, &[&z]);
        let part = HarmonicPart::identity(kernel.clone(), z.ncols());
        let group = InducingGroup::at_prior(&part, z, jitter).map_err(|e| group_err(0, e))?;
        Ok(SvgpModel {
            inner: HvgpModel::single(kernel, group, likelihood, jitter)?,
        })
    }

    pub fn from_parts(
        kernel: Kernel,
        z: DMatrix<f64>,
        mu: DVector<f64>,
        l: DMatrix<f64>,
        likelihood: Likelihood,
        jitter: f64,
    ) -> Result<Self> {
        let group = InducingGroup::new(z, mu, l)?;
        Ok(SvgpModel {
            inner: HvgpModel::single(kernel, group, likelihood, jitter)?,
        })
    }

    /// Wraps a single-group model under the trivial transform.
    pub fn from_hvgp(model: HvgpModel) -> Result<Self> {
        if !model.symmetry.factors().is_empty() || model.groups.len() != 1 {
            return Err(Error::Unsupported(
                "only a single-group model without symmetry is an SVGP".into(),
            ));
        }
        Ok(SvgpModel { inner: model })
    }

    pub fn kernel(&self) -> &Kernel {
        self.inner.kernel()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.inner.groups[0].z
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.inner.groups[0].mu
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.inner.groups[0].l
    }

    pub fn likelihood(&self) -> &Likelihood {
        self.inner.likelihood()
    }

    pub fn jitter(&self) -> f64 {
        self.inner.jitter
    }

    pub fn as_hvgp(&self) -> &HvgpModel {
        &self.inner
    }

    pub fn into_hvgp(self) -> HvgpModel {
        self.inner
    }
}

impl AsRef<HvgpModel> for HvgpModel {
    fn as_ref(&self) -> &HvgpModel {
        self
    }
}

impl AsRef<HvgpModel> for SvgpModel {
    fn as_ref(&self) -> &HvgpModel {
        &self.inner
    }
}
