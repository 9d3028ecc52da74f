//! Harmonic kernel decomposition.
//!
//! For a T-cyclic `G` and a `G`-invariant kernel `k`, the DFT of the orbit
//! sequence `[k(x, G^s x')]_s` yields parts `k_t(x, x') = Σ_s F_{t,s} k(x, G^s x')`
//! that sum to `k`. Multi-way transforms use the tensor-product DFT. Real
//! kernels can be resolved into `⌊T/2⌋ + 1` real parts per way by pairing
//! conjugate frequencies `t` and `T − t`; `k_0` and, for even `T`, `k_{T/2}`
//! are kept unpaired so that the parts still sum exactly to `k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{probe_pairs, verify_invariance, Kernel, C64};
use crate::linalg::rows;
use crate::transforms::{multi_indices, CyclicTransform, MultiWayTransform};

/// Invariance tolerance used when constructing decompositions.
pub const INVARIANCE_TOL: f64 = 1e-8;
const INVARIANCE_PROBES: usize = 32;
const INVARIANCE_SEED: u64 = 0x5eed;

/// `F_{t,s} = e^{−i2πts/T} / T`.
#[derive(Clone, Debug, PartialEq)]
pub struct DftMatrix {
    order: usize,
    entries: DMatrix<C64>,
}

pub fn dft_matrix(order: usize) -> Result<DftMatrix> {
    if order == 0 {
        return Err(Error::Parameter("DFT order must be at least 1".into()));
    }
    let entries = DMatrix::from_fn(order, order, |t, s| dft_entry(order, t, s));
    Ok(DftMatrix { order, entries })
}

fn dft_entry(order: usize, t: usize, s: usize) -> C64 {
    // reduce t*s first so the angle stays accurate for larger T
    let ts = (t * s) % order;
    C64::from_polar(
        1.0 / order as f64,
        -2.0 * std::f64::consts::PI * ts as f64 / order as f64,
    )
}

impl DftMatrix {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn entry(&self, t: usize, s: usize) -> C64 {
        self.entries[(t, s)]
    }

    /// `F⁻¹ = T·Fᴴ`.
    pub fn inverse(&self) -> DMatrix<C64> {
        self.entries.adjoint() * C64::new(self.order as f64, 0.0)
    }
}

/// Orbit weights `w_s` of one real-resolved frequency of a single way.
pub fn real_pair_weights(period: usize, r: usize) -> Vec<f64> {
    let tf = period as f64;
    (0..period)
        .map(|s| {
            let angle = 2.0 * std::f64::consts::PI * ((r * s) % period) as f64 / tf;
            if r == 0 || 2 * r == period {
                angle.cos() / tf
            } else {
                2.0 * angle.cos() / tf
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartMode {
    Complex,
    RealResolved,
}

/// One component of the decomposition: `Σ_s w_s k(x, G^s x')` over the orbit.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicPart {
    base: Kernel,
    symmetry: MultiWayTransform,
    index: Vec<usize>,
    mode: PartMode,
    weights: Vec<C64>,
}

impl HarmonicPart {
    /// Complex part `k_t` for the multi-index `t`. Invariance is not checked.
    pub fn complex(
        base: Kernel,
        symmetry: impl Into<MultiWayTransform>,
        index: Vec<usize>,
    ) -> Result<Self> {
        let symmetry = symmetry.into();
        symmetry.check_index(&index)?;
        let periods = symmetry.periods();
        let weights = multi_indices(&periods)
            .iter()
            .map(|s| {
                periods
                    .iter()
                    .zip(&index)
                    .zip(s)
                    .map(|((&p, &t), &sj)| dft_entry(p, t, sj))
                    .product()
            })
            .collect();
        Ok(HarmonicPart {
            base,
            symmetry,
            index,
            mode: PartMode::Complex,
            weights,
        })
    }

    /// Real-resolved part for `r_j ∈ 0..=⌊T_j/2⌋`. Invariance is not checked.
    pub fn real_resolved(
        base: Kernel,
        symmetry: impl Into<MultiWayTransform>,
        index: Vec<usize>,
    ) -> Result<Self> {
        let symmetry = symmetry.into();
        let periods = symmetry.periods();
        if index.len() != periods.len() || index.iter().zip(&periods).any(|(r, p)| *r > p / 2) {
            return Err(Error::IndexOutOfRange { index, periods });
        }
        let per_way: Vec<Vec<f64>> = periods
            .iter()
            .zip(&index)
            .map(|(&p, &r)| real_pair_weights(p, r))
            .collect();
        let weights = multi_indices(&periods)
            .iter()
            .map(|s| {
                let w: f64 = per_way.iter().zip(s).map(|(w, &sj)| w[sj]).product();
                C64::new(w, 0.0)
            })
            .collect();
        Ok(HarmonicPart {
            base,
            symmetry,
            index,
            mode: PartMode::RealResolved,
            weights,
        })
    }

    /// The base kernel itself as a single part under the trivial transform.
    pub fn identity(base: Kernel, dim: usize) -> Self {
        HarmonicPart {
            base,
            symmetry: MultiWayTransform::identity(dim),
            index: Vec::new(),
            mode: PartMode::RealResolved,
            weights: vec![C64::new(1.0, 0.0)],
        }
    }

    pub fn base(&self) -> &Kernel {
        &self.base
    }

    pub fn set_base(&mut self, base: Kernel) {
        self.base = base;
    }

    pub fn symmetry(&self) -> &MultiWayTransform {
        &self.symmetry
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn mode(&self) -> PartMode {
        self.mode
    }

    pub fn weights(&self) -> &[C64] {
        &self.weights
    }

    /// Whether every value is real: real base with real orbit weights.
    pub fn is_real(&self) -> bool {
        self.base.is_real() && self.weights.iter().all(|w| w.im == 0.0)
    }

    pub fn input_dim(&self) -> usize {
        self.symmetry.input_dim()
    }

    /// `k_t(x, y)` given the precomputed orbit of `y`.
    #[inline]
    pub(crate) fn eval_orbit(&self, x: &[f64], y_orbit: &[Vec<f64>]) -> C64 {
        self.weights
            .iter()
            .zip(y_orbit)
            .map(|(w, gy)| w * self.base.eval_unchecked(x, gy))
            .sum()
    }

    /// Real-valued version of [`eval_orbit`](Self::eval_orbit) for real parts.
    #[inline]
    pub(crate) fn eval_orbit_real(&self, x: &[f64], y_orbit: &[Vec<f64>]) -> f64 {
        self.weights
            .iter()
            .zip(y_orbit)
            .filter(|(w, _)| w.re != 0.0)
            .map(|(w, gy)| w.re * self.base.eval_real(x, gy))
            .sum()
    }

    pub(crate) fn orbit(&self, y: &[f64]) -> Vec<Vec<f64>> {
        self.symmetry.orbit_unchecked(y)
    }

    fn check(&self, x: &[f64], y: &[f64]) -> Result<()> {
        let d = self.symmetry.input_dim();
        if x.len() != d || y.len() != d {
            return Err(Error::Shape(format!(
                "part expects dimension {d}, got {} and {}",
                x.len(),
                y.len()
            )));
        }
        self.base.check_input_dim(d)
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<C64> {
        self.check(x, y)?;
        Ok(self.eval_orbit(x, &self.orbit(y)))
    }

    /// Gram matrix `[k_t(x_i, y_j)]`.
    pub fn gram(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<C64>> {
        let (xr, yr) = (rows(x), rows(y));
        if let (Some(a), Some(b)) = (xr.first(), yr.first()) {
            self.check(a, b)?;
        }
        if x.ncols() != y.ncols() {
            return Err(Error::Shape("gram inputs differ in dimension".into()));
        }
        let orbits: Vec<_> = yr.iter().map(|y| self.orbit(y)).collect();
        Ok(DMatrix::from_fn(xr.len(), yr.len(), |i, j| {
            self.eval_orbit(&xr[i], &orbits[j])
        }))
    }

    /// Real Gram matrix for real parts.
    pub fn gram_real(&self, x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if !self.is_real() {
            return Err(Error::Unsupported("real gram of a complex part".into()));
        }
        let (xr, yr) = (rows(x), rows(y));
        if let (Some(a), Some(b)) = (xr.first(), yr.first()) {
            self.check(a, b)?;
        }
        let orbits: Vec<_> = yr.iter().map(|y| self.orbit(y)).collect();
        Ok(DMatrix::from_fn(xr.len(), yr.len(), |i, j| {
            self.eval_orbit_real(&xr[i], &orbits[j])
        }))
    }
}

/// `k_t(x, x')` for a part.
pub fn harmonic_eval(part: &HarmonicPart, x: &[f64], y: &[f64]) -> Result<C64> {
    part.eval(x, y)
}

/// Multi-way part `k_t(x, x') = Σ_s ∏_j F^{(j)}_{t_j,s_j} k(x, G^s x')`.
pub fn multiway_harmonic_eval(
    base: &Kernel,
    g: &MultiWayTransform,
    index: &[usize],
    x: &[f64],
    y: &[f64],
) -> Result<C64> {
    HarmonicPart::complex(base.clone(), g.clone(), index.to_vec())?.eval(x, y)
}

/// `(k_t + k_{T−t})(x, x') = (2/T) Σ_s cos(2πts/T) k(x, G^s x')` for `1 ≤ t < T/2`.
pub fn real_pair_eval(
    base: &Kernel,
    g: &CyclicTransform,
    t: usize,
    x: &[f64],
    y: &[f64],
) -> Result<f64> {
    let period = g.period();
    if t == 0 || 2 * t >= period {
        return Err(Error::Parameter(format!(
            "real pair index {t} is not interior for period {period}; \
             use real_decomposition for the unpaired parts"
        )));
    }
    if !base.is_real() {
        return Err(Error::Unsupported("real pairing needs a real base kernel".into()));
    }
    Ok(HarmonicPart::real_resolved(base.clone(), g.clone(), vec![t])?
        .eval(x, y)?
        .re)
}

/// `[k(x, G^s x')]` over the orbit in row-major multi-index order.
pub fn orbit_values(base: &Kernel, g: &MultiWayTransform, x: &[f64], y: &[f64]) -> Result<Vec<C64>> {
    let orbit = g.orbit(y)?;
    base.check_input_dim(x.len())?;
    Ok(orbit.iter().map(|gy| base.eval_unchecked(x, gy)).collect())
}

fn check_invariant(base: &Kernel, g: &MultiWayTransform) -> Result<()> {
    base.validate()?;
    base.check_input_dim(g.input_dim())?;
    let probes = probe_pairs(g.input_dim(), INVARIANCE_PROBES, INVARIANCE_SEED);
    let deviation = verify_invariance(base, g, &probes)?;
    if deviation > INVARIANCE_TOL {
        return Err(Error::Invariance { deviation });
    }
    Ok(())
}

/// All complex parts `k_t`, one per multi-index, after an invariance check.
pub fn complex_decomposition(
    base: &Kernel,
    g: impl Into<MultiWayTransform>,
) -> Result<Vec<HarmonicPart>> {
    let g = g.into();
    check_invariant(base, &g)?;
    g.multi_indices()
        .into_iter()
        .map(|t| HarmonicPart::complex(base.clone(), g.clone(), t))
        .collect()
}

/// Real-valued decomposition into `∏_j (⌊T_j/2⌋ + 1)` parts.
pub fn real_decomposition(
    base: &Kernel,
    g: impl Into<MultiWayTransform>,
) -> Result<Vec<HarmonicPart>> {
    let g = g.into();
    if !base.is_real() {
        return Err(Error::Unsupported(
            "real decomposition needs a real-valued base kernel".into(),
        ));
    }
    check_invariant(base, &g)?;
    let half: Vec<usize> = g.periods().iter().map(|p| p / 2 + 1).collect();
    multi_indices(&half)
        .into_iter()
        .map(|r| HarmonicPart::real_resolved(base.clone(), g.clone(), r))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::default_probes;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn dft_small_orders() {
        let f1 = dft_matrix(1).unwrap();
        assert_eq!(f1.entry(0, 0), C64::new(1.0, 0.0));
        let f2 = dft_matrix(2).unwrap();
        let expected = [[0.5, 0.5], [0.5, -0.5]];
        for t in 0..2 {
            for s in 0..2 {
                assert!(close(f2.entry(t, s), C64::new(expected[t][s], 0.0), 1e-16));
            }
        }
        let f4 = dft_matrix(4).unwrap();
        let row = [
            C64::new(0.25, 0.0),
            C64::new(0.0, -0.25),
            C64::new(-0.25, 0.0),
            C64::new(0.0, 0.25),
        ];
        for s in 0..4 {
            assert!(close(f4.entry(1, s), row[s], 1e-16));
        }
        assert!(matches!(dft_matrix(0), Err(Error::Parameter(_))));
    }

    #[test]
    fn dft_inverse_and_orthogonality() {
        for order in [1, 2, 3, 5, 12, 24] {
            let f = dft_matrix(order).unwrap();
            let id = f.matrix() * f.inverse();
            assert!((id - DMatrix::<C64>::identity(order, order)).norm() < 1e-12);
            let gram = f.matrix() * f.matrix().adjoint();
            for a in 0..order {
                for b in 0..order {
                    if a != b {
                        assert!(gram[(a, b)].norm() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn negation_parts_by_hand() {
        let rbf = Kernel::rbf(vec![1.0], 1.0).unwrap();
        let g = CyclicTransform::negation_all(1);
        let e2 = (-2.0f64).exp();
        let k0 = HarmonicPart::complex(rbf.clone(), g.clone(), vec![0]).unwrap();
        let k1 = HarmonicPart::complex(rbf, g, vec![1]).unwrap();
        // ½(k(1,1) + k(1,−1)) and ½(k(1,1) − k(1,−1))
        assert!(close(harmonic_eval(&k0, &[1.0], &[1.0]).unwrap(), C64::new((1.0 + e2) / 2.0, 0.0), 1e-15));
        assert!(close(harmonic_eval(&k1, &[1.0], &[1.0]).unwrap(), C64::new((1.0 - e2) / 2.0, 0.0), 1e-15));
        assert!((0.5676676416183064 - (1.0 + e2) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn circle_toy_parts() {
        let g = CyclicTransform::torus_shift(1, 0, 2.0 * std::f64::consts::PI, 4).unwrap();
        let parts = complex_decomposition(&Kernel::circle_toy(), g).unwrap();
        let v: Vec<C64> = parts
            .iter()
            .map(|p| p.eval(&[0.0], &[0.0]).unwrap())
            .collect();
        assert!(close(v[0], C64::new(0.0, 0.0), 1e-15));
        assert!(close(v[1], C64::new(1.0, 0.0), 1e-15));
        assert!(close(v[2], C64::new(1.0, 0.0), 1e-15));
        assert!(close(v[3], C64::new(0.0, 0.0), 1e-15));
    }

    #[test]
    fn real_pair_weights_period_twelve() {
        let w = real_pair_weights(12, 3);
        let expected = [1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0, 1.0, 0.0, -1.0, 0.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn real_pair_matches_two_complex_parts() {
        let rbf = Kernel::rbf(vec![0.9], 1.0).unwrap();
        let g = CyclicTransform::rotation(2, (0, 1), 4).unwrap();
        let k1 = HarmonicPart::complex(rbf.clone(), g.clone(), vec![1]).unwrap();
        let k3 = HarmonicPart::complex(rbf.clone(), g.clone(), vec![3]).unwrap();
        for p in default_probes(2, 20, 8).chunks(2) {
            let pair = real_pair_eval(&rbf, &g, 1, &p[0], &p[1]).unwrap();
            let sum = k1.eval(&p[0], &p[1]).unwrap() + k3.eval(&p[0], &p[1]).unwrap();
            assert!((sum.re - pair).abs() < 1e-10 && sum.im.abs() < 1e-10);
        }
        let neg = CyclicTransform::negation_all(2);
        assert!(real_pair_eval(&rbf, &neg, 1, &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(real_pair_eval(&rbf, &g, 2, &[0.0, 0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn real_decomposition_counts() {
        let rbf = Kernel::rbf(vec![1.0], 1.0).unwrap();
        assert_eq!(real_decomposition(&rbf, CyclicTransform::negation_all(2)).unwrap().len(), 2);
        let sphere = rbf.clone().with_embedding(crate::kernels::Embedding::LonLatSphere);
        let shift = CyclicTransform::torus_shift(2, 0, 360.0, 12).unwrap();
        assert_eq!(real_decomposition(&sphere, shift).unwrap().len(), 7);
        let (h, w) = (7, 7);
        let g = MultiWayTransform::new_unchecked(
            h * w,
            vec![
                CyclicTransform::ImageTranslate {
                    height: h,
                    width: w,
                    axis: crate::transforms::ImageAxis::Rows,
                    pixels: 1,
                    wrap: true,
                },
                CyclicTransform::ImageTranslate {
                    height: h,
                    width: w,
                    axis: crate::transforms::ImageAxis::Cols,
                    pixels: 1,
                    wrap: true,
                },
            ],
        );
        assert_eq!(real_decomposition(&rbf, g).unwrap().len(), 16);
    }

    #[test]
    fn negation_real_parts_by_hand() {
        let rbf = Kernel::rbf(vec![1.3], 0.7).unwrap();
        let parts = real_decomposition(&rbf, CyclicTransform::negation_all(2)).unwrap();
        let (x, y) = ([0.2, -0.4], [1.0, 0.5]);
        let kxy = rbf.eval_real(&x, &y);
        let kxny = rbf.eval_real(&x, &[-1.0, -0.5]);
        assert!((parts[0].eval(&x, &y).unwrap().re - 0.5 * (kxy + kxny)).abs() < 1e-15);
        assert!((parts[1].eval(&x, &y).unwrap().re - 0.5 * (kxy - kxny)).abs() < 1e-15);
    }

    #[test]
    fn non_invariant_kernel_rejected() {
        let aniso = Kernel::rbf(vec![0.5, 2.0], 1.0).unwrap();
        let g = CyclicTransform::rotation(2, (0, 1), 4).unwrap();
        assert!(matches!(
            real_decomposition(&aniso, g),
            Err(Error::Invariance { .. })
        ));
    }

    #[test]
    fn multiway_degenerate_and_symmetric_average() {
        let rbf = Kernel::rbf(vec![1.0], 1.0).unwrap();
        let g = CyclicTransform::negation_all(2);
        let single = HarmonicPart::complex(rbf.clone(), g.clone(), vec![1]).unwrap();
        let multi =
            multiway_harmonic_eval(&rbf, &g.clone().into(), &[1], &[0.3, 0.1], &[-0.2, 0.5]).unwrap();
        assert_eq!(single.eval(&[0.3, 0.1], &[-0.2, 0.5]).unwrap(), multi);

        let g2 = MultiWayTransform::new_unchecked(
            2,
            vec![
                CyclicTransform::negation(2, vec![0]).unwrap(),
                CyclicTransform::negation(2, vec![1]).unwrap(),
            ],
        );
        let (a, b) = (0.7, -1.1);
        let x = [a, b];
        let v = multiway_harmonic_eval(&rbf, &g2, &[0, 0], &x, &x).unwrap();
        let avg = 0.25
            * [[a, b], [a, -b], [-a, b], [-a, -b]]
                .iter()
                .map(|y| rbf.eval_real(&x, y))
                .sum::<f64>();
        assert!((v.re - avg).abs() < 1e-15 && v.im == 0.0);
        assert!(matches!(
            multiway_harmonic_eval(&rbf, &g2, &[0, 2], &x, &x),
            Err(Error::IndexOutOfRange { .. })
        ));
    }
}
