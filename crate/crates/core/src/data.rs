//! Datasets: CSV ingestion, seeded splits, standardization, synthetic
//! generators and evaluation metrics.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Binary,
}

/// Per-column affine maps `x ↦ (x − mean)/std`, and the same for `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Standardization {
            x_mean: vec![0.0; d],
            x_std: vec![1.0; d],
            y_mean: 0.0,
            y_std: 1.0,
        }
    }

    pub fn y_to_original(&self, y: f64) -> f64 {
        y * self.y_std + self.y_mean
    }

    pub fn y_from_original(&self, y: f64) -> f64 {
        (y - self.y_mean) / self.y_std
    }

    pub fn x_from_original(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_std[j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// Inputs in model space (standardized when requested).
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub task: Task,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub stats: Standardization,
    pub feature_names: Vec<String>,
    /// Non-fatal issues found while loading.
    pub warnings: Vec<String>,
}

impl Dataset {
    /// Unstandardized dataset with a seeded 64/16/20 split.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, task: Task, seed: u64) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::Data("empty dataset".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::Data(format!("{} rows of inputs, {} targets", x.nrows(), y.len())));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite value".into()));
        }
        let (train, val, test) = split(x.nrows(), seed);
        let d = x.ncols();
        Ok(Dataset {
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            x,
            y,
            task,
            train,
            val,
            test,
            stats: Standardization::identity(d),
            warnings: Vec::new(),
        })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// Standardizes inputs and/or (regression) targets with statistics of
    /// the training split. Constant columns keep a unit scale.
    pub fn standardize(&mut self, inputs: bool, targets: bool) {
        let rows = if self.train.is_empty() {
            (0..self.n()).collect()
        } else {
            self.train.clone()
        };
        let nt = rows.len() as f64;
        if inputs {
            for j in 0..self.dim() {
                let mean = rows.iter().map(|&i| self.x[(i, j)]).sum::<f64>() / nt;
                let var = rows.iter().map(|&i| (self.x[(i, j)] - mean).powi(2)).sum::<f64>() / nt;
                let mut std = var.sqrt();
                if !(std > 1e-12 * mean.abs().max(1.0)) {
                    self.warnings.push(format!(
                        "column `{}` is constant; left unscaled",
                        self.feature_names[j]
                    ));
                    std = 1.0;
                }
                for i in 0..self.n() {
                    self.x[(i, j)] = (self.x[(i, j)] - mean) / std;
                }
                self.stats.x_mean[j] = mean;
                self.stats.x_std[j] = std;
            }
        }
        if targets && self.task == Task::Regression {
            let mean = rows.iter().map(|&i| self.y[i]).sum::<f64>() / nt;
            let var = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum::<f64>() / nt;
            let std = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
            self.y.iter_mut().for_each(|v| *v = (*v - mean) / std);
            self.stats.y_mean = mean;
            self.stats.y_std = std;
        }
    }

    pub fn subset(&self, idx: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        (self.x.select_rows(idx), self.y.select_rows(idx))
    }

    pub fn train_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        self.subset(&self.train)
    }

    pub fn val_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        self.subset(&self.val)
    }

    pub fn test_data(&self) -> (DMatrix<f64>, DVector<f64>) {
        self.subset(&self.test)
    }
}

/// Seeded 64/16/20 train/validation/test split.
pub fn split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let n_train = (0.64 * n as f64).round() as usize;
    let n_val = (0.16 * n as f64).round() as usize;
    let n_val = n_val.min(n - n_train);
    let test = idx.split_off(n_train + n_val);
    let val = idx.split_off(n_train);
    (idx, val, test)
}

/// Headered numeric CSV; `target` is a column name or a zero-based index.
/// Features are all remaining columns in header order.
pub fn load_csv(path: impl AsRef<Path>, target: &str, task: Task, seed: u64) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let t = header
        .iter()
        .position(|h| h == target)
        .or_else(|| target.parse::<usize>().ok().filter(|&i| i < header.len()))
        .ok_or_else(|| Error::Data(format!("target column `{target}` not found in header")))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Data(format!(
                "row {} has {} fields, header has {}",
                r + 1,
                rec.len(),
                header.len()
            )));
        }
        let mut row = Vec::with_capacity(header.len() - 1);
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Data(format!(
                    "non-numeric cell `{field}` at row {}, column {} (`{}`)",
                    r + 1,
                    c + 1,
                    header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite cell at row {}, column {}", r + 1, c + 1)));
            }
            if c == t {
                ys.push(v);
            } else {
                row.push(v);
            }
        }
        xs.push(row);
    }
    if xs.is_empty() {
        return Err(Error::Data(format!("{} has a header but no rows", path.display())));
    }
    let d = header.len() - 1;
    let x = DMatrix::from_fn(xs.len(), d, |i, j| xs[i][j]);
    let mut ds = Dataset::new(x, DVector::from_vec(ys), task, seed)?;
    ds.feature_names = header
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != t)
        .map(|(_, h)| h.clone())
        .collect();
    ds.standardize(true, true);
    Ok(ds)
}

fn normal(r: &mut rng::Rng) -> f64 {
    StandardNormal.sample(r)
}

/// `x ~ N(0, 1)`, `y = sin(3x)·exp(−x²/4) + 0.1ε`.
pub fn make_symmetric_1d(n: usize, seed: u64) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Parameter("make_symmetric_1d needs n ≥ 10".into()));
    }
    let mut r = rng::stream(seed, "data");
    let x: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&v| (3.0 * v).sin() * (-v * v / 4.0).exp() + 0.1 * normal(&mut r))
        .collect();
    Dataset::new(DMatrix::from_vec(n, 1, x), DVector::from_vec(y), Task::Regression, seed)
}

/// Noise-free target of the torus grid at `(lon°, lat°)`.
pub fn torus_signal(lon: f64, lat: f64) -> f64 {
    let (l, p) = (lon.to_radians(), lat.to_radians());
    0.5 * p.sin() + l.cos() * p.cos() + 0.6 * (2.0 * l).sin() * p.cos().powi(2) + 0.3 * (3.0 * l).cos() * p.cos()
}

/// Regular `(lon, lat)` grid with `lon ∈ [−180, 180)`, `lat ∈ [−90, 90]`
/// and a smooth longitude-periodic target plus `0.05` noise.
pub fn make_torus_grid(n_lon: usize, n_lat: usize, seed: u64) -> Result<Dataset> {
    if n_lon * n_lat < 100 || n_lat < 2 {
        return Err(Error::Parameter("make_torus_grid needs n_lon·n_lat ≥ 100 and n_lat ≥ 2".into()));
    }
    let mut r = rng::stream(seed, "data");
    let n = n_lon * n_lat;
    let mut x = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    for i in 0..n_lon {
        for j in 0..n_lat {
            let k = i * n_lat + j;
            let lon = -180.0 + 360.0 * i as f64 / n_lon as f64;
            let lat = -90.0 + 180.0 * j as f64 / (n_lat - 1) as f64;
            x[(k, 0)] = lon;
            x[(k, 1)] = lat;
            y[k] = torus_signal(lon, lat) + 0.05 * normal(&mut r);
        }
    }
    let mut ds = Dataset::new(x, y, Task::Regression, seed)?;
    ds.feature_names = vec!["lon".into(), "lat".into()];
    Ok(ds)
}

/// Unit-sphere coordinates of `(lon°, lat°)` rows.
pub fn sphere_features(x: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), 3, |i, j| {
        let (l, p) = (x[(i, 0)].to_radians(), x[(i, 1)].to_radians());
        match j {
            0 => p.cos() * l.cos(),
            1 => p.cos() * l.sin(),
            _ => p.sin(),
        }
    })
}

/// Row-major `side×side` images of two classes: a short bar at a random
/// position and angle (label 0) or a round blob at a random position and
/// width (label 1). Each image is scaled, flipped up-down and left-right
/// with probability ½ and corrupted by Gaussian pixel noise. The class
/// distributions are closed under both flips.
pub fn make_flip_images(n: usize, side: usize, seed: u64) -> Result<Dataset> {
    make_flip_images_with_noise(n, side, FLIP_PIXEL_NOISE, seed)
}

/// Pixel noise standard deviation of [`make_flip_images`].
pub const FLIP_PIXEL_NOISE: f64 = 0.2;

/// [`make_flip_images`] with a chosen pixel noise level.
pub fn make_flip_images_with_noise(n: usize, side: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if side < 4 {
        return Err(Error::Parameter("make_flip_images needs side ≥ 4".into()));
    }
    let mut r = rng::stream(seed, "data");
    let s = side as f64;
    let (lo, hi) = (0.2 * s, 0.8 * s - 1.0);
    let mut x = DMatrix::zeros(n, side * side);
    let mut y = DVector::zeros(n);
    let mut img = vec![0.0; side * side];
    for k in 0..n {
        let label = r.random_bool(0.5);
        let (ci, cj) = (r.random_range(lo..hi), r.random_range(lo..hi));
        let amp = r.random_range(0.8..1.2);
        if label {
            let sigma: f64 = r.random_range(0.12..0.2) * s;
            for i in 0..side {
                for j in 0..side {
                    let d2 = (i as f64 - ci).powi(2) + (j as f64 - cj).powi(2);
                    img[i * side + j] = amp * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        } else {
            let angle: f64 = r.random_range(0.0..std::f64::consts::PI);
            let (ui, uj) = (angle.sin(), angle.cos());
            let half = r.random_range(0.2..0.35) * s;
            let width = 0.08 * s;
            for i in 0..side {
                for j in 0..side {
                    let (pi, pj) = (i as f64 - ci, j as f64 - cj);
                    let t = (pi * ui + pj * uj).clamp(-half, half);
                    let d2 = (pi - t * ui).powi(2) + (pj - t * uj).powi(2);
                    img[i * side + j] = amp * (-d2 / (2.0 * width * width)).exp();
                }
            }
        }
        let ud = r.random_bool(0.5);
        let lr = r.random_bool(0.5);
        for i in 0..side {
            for j in 0..side {
                let si = if ud { side - 1 - i } else { i };
                let sj = if lr { side - 1 - j } else { j };
                x[(k, i * side + j)] = img[si * side + sj] + noise * normal(&mut r);
            }
        }
        y[k] = label as u8 as f64;
    }
    Dataset::new(x, y, Task::Binary, seed)
}

/// `x ~ N(0, Σ)` with `Σ = R diag(s²) Rᵀ` for a seeded rotation `R` and
/// geometrically decaying scales from 2 down to 0.25, so the distribution
/// is symmetric under reflections along its principal axes but not along
/// the coordinate axes. `y = sin(wᵀx) + 0.3 (vᵀx)² + 0.1ε`.
pub fn make_symmetric_gaussian(n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n < 10 || d == 0 {
        return Err(Error::Parameter("make_symmetric_gaussian needs n ≥ 10 and d ≥ 1".into()));
    }
    let mut r = rng::stream(seed, "data");
    let g = DMatrix::from_fn(d, d, |_, _| normal(&mut r));
    let rot = g.qr().q();
    let scales = DVector::from_fn(d, |j, _| {
        if d == 1 {
            1.0
        } else {
            2.0 * (0.125f64).powf(j as f64 / (d - 1) as f64)
        }
    });
    let w = DVector::from_fn(d, |_, _| normal(&mut r)).normalize();
    let v = DVector::from_fn(d, |_, _| normal(&mut r)).normalize();
    let mut x = DMatrix::zeros(n, d);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let e = DVector::from_fn(d, |j, _| scales[j] * normal(&mut r));
        let xi = &rot * e;
        x.row_mut(i).copy_from(&xi.transpose());
        y[i] = w.dot(&xi).sin() + 0.3 * v.dot(&xi).powi(2) + 0.1 * normal(&mut r);
    }
    Dataset::new(x, y, Task::Regression, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub nll: f64,
}

/// RMSE and mean Gaussian NLL in original units. `var` is the predictive
/// variance of `y` (noise included) in standardized units.
pub fn metrics(mean: &DVector<f64>, var: &DVector<f64>, y_true: &DVector<f64>, stats: &Standardization) -> Result<Metrics> {
    if mean.len() != var.len() || mean.len() != y_true.len() || mean.is_empty() {
        return Err(Error::Shape("metrics inputs differ in length".into()));
    }
    if var.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Numerical("non-positive predictive variance".into()));
    }
    let n = mean.len() as f64;
    let (mut se, mut nll) = (0.0, 0.0);
    for i in 0..mean.len() {
        let m = stats.y_to_original(mean[i]);
        let v = var[i] * stats.y_std * stats.y_std;
        let yt = stats.y_to_original(y_true[i]);
        se += (yt - m).powi(2);
        nll += 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (yt - m).powi(2) / v);
    }
    Ok(Metrics {
        rmse: (se / n).sqrt(),
        nll: nll / n,
    })
}

/// Fraction of `p(y=1) > ½` decisions matching binary labels.
pub fn accuracy(prob: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let hits = prob
        .iter()
        .zip(y.iter())
        .filter(|(p, t)| (**p > 0.5) == (**t > 0.5))
        .count();
    hits as f64 / y.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn split_is_disjoint_and_covering() {
        let (a, b, c) = split(101, 3);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        assert_eq!((a.len(), b.len(), c.len()), (65, 16, 20));
        all.sort_unstable();
        assert_eq!(all, (0..101).collect::<Vec<_>>());
    }

    #[test]
    fn csv_loading() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let mut f = std::fs::File::create(&p).unwrap();
        writeln!(f, "a,b,c,y\n1,5,2,0.5\n2,5,4,1.5\n3,5,9,-2").unwrap();
        drop(f);
        let ds = load_csv(&p, "y", Task::Regression, 0).unwrap();
        assert_eq!((ds.n(), ds.dim()), (3, 3));
        assert_eq!(ds.feature_names, vec!["a", "b", "c"]);
        assert_eq!(ds.stats.x_std[1], 1.0);
        assert_eq!(ds.warnings.len(), 1);
        let by_index = load_csv(&p, "3", Task::Regression, 0).unwrap();
        assert_eq!(by_index.y, ds.y);

        let h = dir.path().join("h.csv");
        std::fs::write(&h, "a,y\n").unwrap();
        assert!(matches!(load_csv(&h, "y", Task::Regression, 0), Err(Error::Data(_))));
        let bad = dir.path().join("b.csv");
        std::fs::write(&bad, "a,y\n1,2\nx,3\n").unwrap();
        let msg = load_csv(&bad, "y", Task::Regression, 0).unwrap_err().to_string();
        assert!(msg.contains("row 2") && msg.contains("column 1"), "{msg}");
        assert!(load_csv(dir.path().join("missing.csv"), "y", Task::Regression, 0).is_err());
    }

    #[test]
    fn y_round_trip() {
        let ds = {
            let mut d = make_symmetric_1d(50, 1).unwrap();
            d.standardize(false, true);
            d
        };
        let raw = make_symmetric_1d(50, 1).unwrap();
        for i in 0..50 {
            assert!((ds.stats.y_to_original(ds.y[i]) - raw.y[i]).abs() <= 1e-12);
        }
    }

    #[test]
    fn symmetric_1d_properties() {
        let a = make_symmetric_1d(10, 4).unwrap();
        assert_eq!(a, make_symmetric_1d(10, 4).unwrap());
        let big = make_symmetric_1d(2000, 4).unwrap();
        assert!(big.x.mean().abs() < 5.0 / (2000f64).sqrt());
        assert!(big.y.iter().all(|v| v.is_finite()));
        assert!(make_symmetric_1d(9, 0).is_err());
    }

    #[test]
    fn torus_grid_properties() {
        let ds = make_torus_grid(24, 10, 2).unwrap();
        assert!(ds.y.iter().all(|v| v.abs() <= 2.4 + 0.05 * 6.0));
        let lon = ds.x.column(0);
        assert!(lon.iter().all(|l| (-180.0..180.0).contains(l)));
        assert!(sphere_features(&ds.x).row_iter().all(|r| (r.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn flip_images_properties() {
        let ds = make_flip_images(400, 8, 3).unwrap();
        let frac = ds.y.sum() / 400.0;
        assert!((frac - 0.5).abs() <= 0.1);
        assert_eq!(ds, make_flip_images(400, 8, 3).unwrap());
        assert!(make_flip_images(10, 3, 0).is_err());
    }

    #[test]
    fn symmetric_gaussian_is_correlated() {
        let ds = make_symmetric_gaussian(4000, 4, 5).unwrap();
        let c = ds.x.transpose() * &ds.x / 4000.0;
        let off: f64 = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| c[(i, j)].abs()).fold(0.0, f64::max);
        assert!(off > 0.1);
        assert!(ds.x.row_mean().norm() < 0.2);
    }

    #[test]
    fn metric_examples() {
        let id = Standardization::identity(1);
        let y = DVector::from_element(3, 0.0);
        let m = metrics(&y, &DVector::from_element(3, 1.0), &y, &id).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert!((m.nll - 0.9189385332046727).abs() < 1e-15);
        assert!(metrics(&y, &DVector::from_element(3, 0.0), &y, &id).is_err());
        // standardized computation equals the direct original-space one
        let st = Standardization { x_mean: vec![0.0], x_std: vec![1.0], y_mean: 3.0, y_std: 2.5 };
        let mean = DVector::from_column_slice(&[0.1, -0.4]);
        let var = DVector::from_column_slice(&[0.3, 0.7]);
        let yt = DVector::from_column_slice(&[0.5, -1.0]);
        let m = metrics(&mean, &var, &yt, &st).unwrap();
        let direct = metrics(
            &mean.map(|v| st.y_to_original(v)),
            &var.map(|v| v * 6.25),
            &yt.map(|v| st.y_to_original(v)),
            &Standardization::identity(1),
        )
        .unwrap();
        assert!((m.rmse - direct.rmse).abs() < 1e-10 && (m.nll - direct.nll).abs() < 1e-10);
    }
}
