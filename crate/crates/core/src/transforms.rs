//! T-cyclic input transformations and their commuting multi-way compositions.
//!
//! Every transform acts on flat real input vectors. Image transforms read the
//! vector as a row-major `height x width` image; the unitary transform reads a
//! `2n` vector as the complex `n`-vector `[Re; Im]`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Probe-based checks compare against this tolerance.
pub const CYCLIC_TOL: f64 = 1e-10;

/// A transform is treated as the identity on a probe when it moves it by less than this.
const IDENTITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageAxis {
    /// Shift along the vertical axis (moves rows).
    Rows,
    /// Shift along the horizontal axis (moves columns).
    Cols,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CyclicTransform {
    /// Negates the listed coordinates. An empty mask is the identity (period 1).
    NegationMask { dim: usize, mask: Vec<usize> },
    /// Rotation by `2π / period` in the coordinate plane `(plane.0, plane.1)`.
    #[serde(rename = "rotation2d")]
    Rotation2D {
        dim: usize,
        plane: (usize, usize),
        period: usize,
    },
    /// Complex unitary `n x n` matrix acting on `[Re(x); Im(x)]`.
    UnitaryMatrix {
        re: Vec<Vec<f64>>,
        im: Vec<Vec<f64>>,
        period: usize,
    },
    /// Shift of coordinate `axis` by `domain_period / order`, wrapped into
    /// `[origin, origin + domain_period)`.
    TorusShift {
        dim: usize,
        axis: usize,
        domain_period: f64,
        order: usize,
        #[serde(default)]
        origin: f64,
    },
    ImageFlipUd { height: usize, width: usize },
    ImageFlipLr { height: usize, width: usize },
    /// Cyclic translation by `pixels` along `axis`.
    ImageTranslate {
        height: usize,
        width: usize,
        axis: ImageAxis,
        pixels: usize,
        wrap: bool,
    },
    /// Reflection `x - 2 D Dᵀ x` negating the span of the orthonormal `directions`.
    PcaNegation { directions: Vec<Vec<f64>> },
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl CyclicTransform {
    pub fn negation_all(dim: usize) -> Self {
        CyclicTransform::NegationMask {
            dim,
            mask: (0..dim).collect(),
        }
    }

    pub fn negation(dim: usize, mask: Vec<usize>) -> Result<Self> {
        let g = CyclicTransform::NegationMask { dim, mask };
        g.validate()?;
        Ok(g)
    }

    pub fn rotation(dim: usize, plane: (usize, usize), period: usize) -> Result<Self> {
        let g = CyclicTransform::Rotation2D { dim, plane, period };
        g.validate()?;
        Ok(g)
    }

    pub fn torus_shift(dim: usize, axis: usize, domain_period: f64, order: usize) -> Result<Self> {
        let g = CyclicTransform::TorusShift {
            dim,
            axis,
            domain_period,
            order,
            origin: 0.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn pca_negation(directions: Vec<Vec<f64>>) -> Result<Self> {
        let g = CyclicTransform::PcaNegation { directions };
        g.validate()?;
        Ok(g)
    }

    /// Dimension of the flat input vectors this transform accepts.
    pub fn input_dim(&self) -> usize {
        match self {
            CyclicTransform::NegationMask { dim, .. }
            | CyclicTransform::Rotation2D { dim, .. }
            | CyclicTransform::TorusShift { dim, .. } => *dim,
            CyclicTransform::UnitaryMatrix { re, .. } => 2 * re.len(),
            CyclicTransform::ImageFlipUd { height, width }
            | CyclicTransform::ImageFlipLr { height, width }
            | CyclicTransform::ImageTranslate { height, width, .. } => height * width,
            CyclicTransform::PcaNegation { directions } => directions.first().map_or(0, Vec::len),
        }
    }

    /// The cyclic order T.
    pub fn period(&self) -> usize {
        match self {
            CyclicTransform::NegationMask { mask, .. } => {
                if mask.is_empty() {
                    1
                } else {
                    2
                }
            }
            CyclicTransform::Rotation2D { period, .. }
            | CyclicTransform::UnitaryMatrix { period, .. } => *period,
            CyclicTransform::TorusShift { order, .. } => *order,
            CyclicTransform::ImageFlipUd { height, .. } => {
                if *height > 1 {
                    2
                } else {
                    1
                }
            }
            CyclicTransform::ImageFlipLr { width, .. } => {
                if *width > 1 {
                    2
                } else {
                    1
                }
            }
            CyclicTransform::ImageTranslate {
                height,
                width,
                axis,
                pixels,
                ..
            } => {
                let size = match axis {
                    ImageAxis::Rows => *height,
                    ImageAxis::Cols => *width,
                };
                size / gcd(size, pixels % size)
            }
            CyclicTransform::PcaNegation { directions } => {
                if directions.is_empty() {
                    1
                } else {
                    2
                }
            }
        }
    }

    /// Structural checks on the descriptor.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        match self {
            CyclicTransform::NegationMask { dim, mask } => {
                if let Some(&i) = mask.iter().find(|&&i| i >= *dim) {
                    return bad(format!("negation index {i} out of range for dim {dim}"));
                }
            }
            CyclicTransform::Rotation2D { dim, plane, period } => {
                if plane.0 >= *dim || plane.1 >= *dim || plane.0 == plane.1 {
                    return bad(format!("invalid rotation plane {plane:?} for dim {dim}"));
                }
                if *period == 0 {
                    return bad("rotation period must be positive".into());
                }
            }
            CyclicTransform::UnitaryMatrix { re, im, period } => {
                let n = re.len();
                if n == 0 || im.len() != n || re.iter().chain(im).any(|r| r.len() != n) {
                    return bad("unitary matrix must be square with matching re/im parts".into());
                }
                if *period == 0 {
                    return bad("unitary period must be positive".into());
                }
                // U Uᴴ = I
                for i in 0..n {
                    for j in 0..n {
                        let (mut sr, mut si) = (0.0, 0.0);
                        for k in 0..n {
                            // U[i,k] * conj(U[j,k])
                            sr += re[i][k] * re[j][k] + im[i][k] * im[j][k];
                            si += im[i][k] * re[j][k] - re[i][k] * im[j][k];
                        }
                        let target = if i == j { 1.0 } else { 0.0 };
                        if (sr - target).abs() > 1e-8 || si.abs() > 1e-8 {
                            return bad("matrix is not unitary".into());
                        }
                    }
                }
            }
            CyclicTransform::TorusShift {
                dim,
                axis,
                domain_period,
                order,
                ..
            } => {
                if axis >= dim {
                    return bad(format!("torus axis {axis} out of range for dim {dim}"));
                }
                if !(domain_period.is_finite() && *domain_period > 0.0) || *order == 0 {
                    return bad("torus shift needs positive domain period and order".into());
                }
            }
            CyclicTransform::ImageFlipUd { height, width }
            | CyclicTransform::ImageFlipLr { height, width } => {
                if *height == 0 || *width == 0 {
                    return bad("empty image".into());
                }
            }
            CyclicTransform::ImageTranslate {
                height,
                width,
                pixels,
                wrap,
                ..
            } => {
                if *height == 0 || *width == 0 {
                    return bad("empty image".into());
                }
                if !wrap {
                    return bad("non-wrapping translation is not cyclic".into());
                }
                if *pixels == 0 {
                    return bad("translation by zero pixels".into());
                }
            }
            CyclicTransform::PcaNegation { directions } => {
                let d = directions.first().map_or(0, Vec::len);
                if d == 0 || directions.iter().any(|v| v.len() != d) {
                    return bad("pca directions must be non-empty vectors of equal length".into());
                }
                for (a, u) in directions.iter().enumerate() {
                    for (b, v) in directions.iter().enumerate() {
                        let dot: f64 = u.iter().zip(v).map(|(p, q)| p * q).sum();
                        let target = if a == b { 1.0 } else { 0.0 };
                        if (dot - target).abs() > 1e-8 {
                            return bad("pca directions are not orthonormal".into());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        let d = self.input_dim();
        if x.len() != d {
            return Err(Error::Shape(format!(
                "transform expects dimension {d}, got {}",
                x.len()
            )));
        }
        Ok(())
    }

    /// One application of G. Caller guarantees the dimension.
    pub(crate) fn step(&self, x: &[f64]) -> Vec<f64> {
        self.power(x, 1)
    }

    /// G^t(x) for `t < period` (unchecked).
    pub(crate) fn power(&self, x: &[f64], t: usize) -> Vec<f64> {
        if t == 0 {
            return x.to_vec();
        }
        match self {
            CyclicTransform::NegationMask { mask, .. } => {
                let mut y = x.to_vec();
                if t % 2 == 1 {
                    for &i in mask {
                        y[i] = -y[i];
                    }
                }
                y
            }
            CyclicTransform::Rotation2D { plane, period, .. } => {
                let angle = 2.0 * std::f64::consts::PI * (t % period) as f64 / *period as f64;
                rotate(x, *plane, angle)
            }
            CyclicTransform::UnitaryMatrix { re, im, .. } => {
                let mut y = x.to_vec();
                for _ in 0..t {
                    y = unitary_mul(re, im, &y, false);
                }
                y
            }
            CyclicTransform::TorusShift {
                axis,
                domain_period,
                order,
                origin,
                ..
            } => {
                let mut y = x.to_vec();
                let shift = domain_period / *order as f64 * t as f64;
                y[*axis] = wrap(x[*axis] + shift, *origin, *domain_period);
                y
            }
            CyclicTransform::ImageFlipUd { height, width } => {
                if t % 2 == 0 {
                    return x.to_vec();
                }
                let mut y = vec![0.0; x.len()];
                for r in 0..*height {
                    let src = &x[r * width..(r + 1) * width];
                    let dst = (height - 1 - r) * width;
                    y[dst..dst + width].copy_from_slice(src);
                }
                y
            }
            CyclicTransform::ImageFlipLr { height, width } => {
                if t % 2 == 0 {
                    return x.to_vec();
                }
                let mut y = vec![0.0; x.len()];
                for r in 0..*height {
                    for c in 0..*width {
                        y[r * width + (width - 1 - c)] = x[r * width + c];
                    }
                }
                y
            }
            CyclicTransform::ImageTranslate {
                height,
                width,
                axis,
                pixels,
                ..
            } => {
                let mut y = vec![0.0; x.len()];
                for r in 0..*height {
                    for c in 0..*width {
                        let (rr, cc) = match axis {
                            ImageAxis::Rows => ((r + pixels * t) % height, c),
                            ImageAxis::Cols => (r, (c + pixels * t) % width),
                        };
                        y[rr * width + cc] = x[r * width + c];
                    }
                }
                y
            }
            CyclicTransform::PcaNegation { directions } => {
                if t % 2 == 0 {
                    return x.to_vec();
                }
                let mut y = x.to_vec();
                for dvec in directions {
                    let proj: f64 = dvec.iter().zip(x).map(|(a, b)| a * b).sum();
                    for (yi, di) in y.iter_mut().zip(dvec) {
                        *yi -= 2.0 * proj * di;
                    }
                }
                y
            }
        }
    }

    /// Applies G `t` times; `t` is reduced modulo the period.
    pub fn apply(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.power(x, t % self.period()))
    }

    /// Sup-norm distance between two inputs, measuring wrapped coordinates on
    /// the circle.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        sup_distance(a, b, &self.wrapped_axes())
    }

    fn wrapped_axes(&self) -> Vec<(usize, f64)> {
        match self {
            CyclicTransform::TorusShift {
                axis,
                domain_period,
                ..
            } => vec![(*axis, *domain_period)],
            _ => Vec::new(),
        }
    }
}

fn sup_distance(a: &[f64], b: &[f64], wraps: &[(usize, f64)]) -> f64 {
    let mut worst = 0.0f64;
    for (i, (p, q)) in a.iter().zip(b).enumerate() {
        let mut d = (p - q).abs();
        if let Some(&(_, period)) = wraps.iter().find(|(axis, _)| *axis == i) {
            d = d.rem_euclid(period);
            d = d.min(period - d);
        }
        worst = worst.max(d);
    }
    worst
}

fn wrap(v: f64, origin: f64, period: f64) -> f64 {
    let r = (v - origin).rem_euclid(period);
    // rem_euclid may round up to exactly `period`
    let r = if r >= period { r - period } else { r };
    origin + r
}

fn rotate(x: &[f64], plane: (usize, usize), angle: f64) -> Vec<f64> {
    let (s, c) = angle.sin_cos();
    let mut y = x.to_vec();
    let (a, b) = (x[plane.0], x[plane.1]);
    y[plane.0] = c * a - s * b;
    y[plane.1] = s * a + c * b;
    y
}

fn unitary_mul(re: &[Vec<f64>], im: &[Vec<f64>], x: &[f64], adjoint: bool) -> Vec<f64> {
    let n = re.len();
    let (xr, xi) = x.split_at(n);
    let mut y = vec![0.0; 2 * n];
    for i in 0..n {
        let (mut sr, mut si) = (0.0, 0.0);
        for k in 0..n {
            let (ur, ui) = if adjoint {
                (re[k][i], -im[k][i])
            } else {
                (re[i][k], im[i][k])
            };
            sr += ur * xr[k] - ui * xi[k];
            si += ur * xi[k] + ui * xr[k];
        }
        y[i] = sr;
        y[n + i] = si;
    }
    y
}

/// `count` seeded standard-normal probes of dimension `dim`.
pub fn default_probes(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, "probes");
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut r)).collect())
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CyclicCheck {
    /// max over probes of ‖G^T(x) − x‖∞, with G^T computed by repeated application.
    pub max_deviation: f64,
    /// Whether every `0 < t < T` moves at least one probe.
    pub minimal: bool,
}

/// Numerical check of the T-cyclic definition on `probes`.
pub fn verify_cyclic(g: &CyclicTransform, probes: &[Vec<f64>]) -> Result<CyclicCheck> {
    if probes.is_empty() {
        return Err(Error::Parameter("verify_cyclic needs probes".into()));
    }
    let period = g.period();
    let mut max_deviation = 0.0f64;
    let mut moved = vec![false; period];
    for x in probes {
        g.check_dim(x)?;
        let mut y = x.clone();
        for t in 1..=period {
            y = g.step(&y);
            let dev = g.distance(&y, x);
            if t == period {
                max_deviation = max_deviation.max(dev);
            } else if dev > IDENTITY_TOL {
                moved[t] = true;
            }
        }
    }
    Ok(CyclicCheck {
        max_deviation,
        minimal: moved.iter().skip(1).all(|&m| m),
    })
}

/// Commuting composition `G_1 ⊗ … ⊗ G_J`. With no factors it is the identity
/// on `dim`-vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiWayTransform {
    dim: usize,
    factors: Vec<CyclicTransform>,
}

impl From<CyclicTransform> for MultiWayTransform {
    fn from(g: CyclicTransform) -> Self {
        MultiWayTransform {
            dim: g.input_dim(),
            factors: vec![g],
        }
    }
}

impl MultiWayTransform {
    pub fn identity(dim: usize) -> Self {
        MultiWayTransform {
            dim,
            factors: Vec::new(),
        }
    }

    /// Builds a composition without the commutativity check.
    #[cfg(test)]
    pub(crate) fn new_unchecked(dim: usize, factors: Vec<CyclicTransform>) -> Self {
        MultiWayTransform { dim, factors }
    }

    pub fn factors(&self) -> &[CyclicTransform] {
        &self.factors
    }

    pub fn input_dim(&self) -> usize {
        self.dim
    }

    pub fn periods(&self) -> Vec<usize> {
        self.factors.iter().map(CyclicTransform::period).collect()
    }

    /// Number of orbit elements, ∏ T_j.
    pub fn orbit_len(&self) -> usize {
        self.periods().iter().product()
    }

    /// All multi-indices in row-major order (last factor fastest).
    pub fn multi_indices(&self) -> Vec<Vec<usize>> {
        multi_indices(&self.periods())
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Shape(format!(
                "transform expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, index: &[usize]) -> Result<()> {
        let periods = self.periods();
        if index.len() != periods.len() || index.iter().zip(&periods).any(|(t, p)| t >= p) {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                periods,
            });
        }
        Ok(())
    }

    /// G^{(s_1,…,s_J)}(x) = G_1^{s_1} ⋯ G_J^{s_J}(x), unchecked.
    pub(crate) fn power(&self, x: &[f64], index: &[usize]) -> Vec<f64> {
        let mut y = x.to_vec();
        for (g, &s) in self.factors.iter().zip(index).rev() {
            if s % g.period() != 0 {
                y = g.power(&y, s % g.period());
            }
        }
        y
    }

    /// Applies the multi-index power with shape and range checks.
    pub fn apply(&self, x: &[f64], index: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if index.len() != self.factors.len() {
            return Err(Error::IndexOutOfRange {
                index: index.to_vec(),
                periods: self.periods(),
            });
        }
        Ok(self.power(x, index))
    }

    /// Same as [`apply`](Self::apply) with the factors applied in the
    /// opposite order.
    pub fn apply_reversed(&self, x: &[f64], index: &[usize]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut y = x.to_vec();
        for (g, &s) in self.factors.iter().zip(index) {
            y = g.apply(&y, s)?;
        }
        Ok(y)
    }

    /// Full orbit in row-major multi-index order; the first element is `x`.
    pub fn orbit(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_dim(x)?;
        Ok(self.orbit_unchecked(x))
    }

    pub(crate) fn orbit_unchecked(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.multi_indices()
            .iter()
            .map(|idx| self.power(x, idx))
            .collect()
    }

    /// Sup-norm distance honouring wrapped coordinates of any factor.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let wraps: Vec<_> = self.factors.iter().flat_map(|g| g.wrapped_axes()).collect();
        sup_distance(a, b, &wraps)
    }
}

pub(crate) fn multi_indices(periods: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = periods.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut idx = vec![0; periods.len()];
        for j in (0..periods.len()).rev() {
            idx[j] = flat % periods[j];
            flat /= periods[j];
        }
        out.push(idx);
    }
    out
}

/// Orbit of a single transform: `[G^0 x, …, G^{T−1} x]`.
pub fn orbit(g: &CyclicTransform, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    g.check_dim(x)?;
    Ok((0..g.period()).map(|s| g.power(x, s)).collect())
}

/// Builds a multi-way transform after checking pairwise commutativity of the
/// factors on every probe.
pub fn compose(factors: Vec<CyclicTransform>, probes: &[Vec<f64>]) -> Result<MultiWayTransform> {
    let first = factors
        .first()
        .ok_or_else(|| Error::Parameter("compose needs at least one factor".into()))?;
    if probes.is_empty() {
        return Err(Error::Parameter("compose needs probes".into()));
    }
    let dim = first.input_dim();
    for g in &factors {
        g.validate()?;
        if g.input_dim() != dim {
            return Err(Error::Shape(format!(
                "factor dimensions differ: {} vs {dim}",
                g.input_dim()
            )));
        }
    }
    for x in probes {
        if x.len() != dim {
            return Err(Error::Shape(format!(
                "probe dimension {} does not match {dim}",
                x.len()
            )));
        }
    }
    for a in 0..factors.len() {
        for b in a + 1..factors.len() {
            let deviation = probes
                .iter()
                .map(|x| {
                    let ab = factors[a].step(&factors[b].step(x));
                    let ba = factors[b].step(&factors[a].step(x));
                    let wraps: Vec<_> = factors[a]
                        .wrapped_axes()
                        .into_iter()
                        .chain(factors[b].wrapped_axes())
                        .collect();
                    sup_distance(&ab, &ba, &wraps)
                })
                .fold(0.0, f64::max);
            if deviation > CYCLIC_TOL {
                return Err(Error::Commutativity {
                    first: a,
                    second: b,
                    deviation,
                });
            }
        }
    }
    Ok(MultiWayTransform { dim, factors })
}
