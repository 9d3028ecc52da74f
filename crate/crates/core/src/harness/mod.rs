//! Experiment orchestration behind the `hgp` binary: data preparation,
//! model construction and the `fit`, `predict`, `decompose`, `diagnose` and
//! `bench` verbs. Every artifact lands in the configured output directory.

mod config;

pub use config::{
    BenchConfig, DataConfig, DataSource, DecomposeConfig, DerivedTransform, DiagnoseConfig, InitConfig,
    ModelShape, PredictConfig, RunConfig, StandardizeConfig, TransformSpec,
};

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use serde::Serialize;
use serde_json::json;

use crate::data::{self, Dataset, Task};
use crate::diagnostics::{
    harmonic_trace_error, inter_domain_check, nystrom_trace_error, optimize_trace_error, orthogonality_suite,
    InterDomainReport, OrthogonalityReport,
};
use crate::error::{Error, Result};
use crate::gp::{default_jitter, elbo, elbo_grad, hvgp_predict, predict, HvgpModel, InducingGroup, Likelihood};
use crate::hkd::{complex_decomposition, real_decomposition, HarmonicPart};
use crate::init::{kmeans_init, median_heuristic, pca_directions};
use crate::kernels::{Embedding, Kernel};
use crate::rng;
use crate::training::{adam_step, fit, full_precision, AdamState, TrainTrace};
use crate::transforms::{compose, default_probes, CyclicTransform, MultiWayTransform};

/// Residual tolerance used by `decompose` and `diagnose` pass flags.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Smallest admissible Gram eigenvalue in the PSD checks.
pub const EIGENVALUE_TOL: f64 = -1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    Fit,
    Predict,
    Decompose,
    Diagnose,
    Bench,
}

impl FromStr for Verb {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fit" => Ok(Verb::Fit),
            "predict" => Ok(Verb::Predict),
            "decompose" => Ok(Verb::Decompose),
            "diagnose" => Ok(Verb::Diagnose),
            "bench" => Ok(Verb::Bench),
            other => Err(Error::Parameter(format!("unknown verb `{other}`"))),
        }
    }
}

/// Dataset, kernel and symmetry after data-dependent initialization.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub kernel: Kernel,
    pub symmetry: MultiWayTransform,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub files: Vec<PathBuf>,
    pub summary: serde_json::Value,
    pub warnings: Vec<String>,
}

fn data_err(e: Error) -> Error {
    match e {
        Error::Parameter(m) => Error::config("data.source", m),
        other => other,
    }
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let seed = cfg.seed;
    let mut ds = match &cfg.data.source {
        DataSource::Csv { path, target, task } => {
            let mut ds = data::load_csv(path, target, *task, seed)?;
            // load_csv standardizes both; undo what the config disables
            let std = cfg.data.standardize();
            if !std.x || !std.y {
                let raw_x = DMatrix::from_fn(ds.n(), ds.dim(), |i, j| ds.x[(i, j)] * ds.stats.x_std[j] + ds.stats.x_mean[j]);
                let raw_y = ds.y.map(|v| ds.stats.y_to_original(v));
                let names = ds.feature_names.clone();
                let warnings = ds.warnings.clone();
                ds = Dataset::new(raw_x, raw_y, *task, seed)?;
                ds.feature_names = names;
                ds.standardize(std.x, std.y);
                ds.warnings.extend(warnings);
                ds.warnings.dedup();
            }
            return Ok(ds);
        }
        DataSource::Symmetric1d { n } => data::make_symmetric_1d(*n, seed),
        DataSource::SymmetricGaussian { n, d } => data::make_symmetric_gaussian(*n, *d, seed),
        DataSource::TorusGrid { n_lon, n_lat } => data::make_torus_grid(*n_lon, *n_lat, seed),
        DataSource::FlipImages { n, side } => data::make_flip_images(*n, *side, seed),
    }
    .map_err(data_err)?;
    let std = cfg.data.standardize();
    ds.standardize(std.x, std.y);
    Ok(ds)
}

/// Expands the transform list against the training inputs and checks
/// commutativity.
pub fn build_symmetry(cfg: &RunConfig, x_train: &DMatrix<f64>) -> Result<(MultiWayTransform, Vec<String>)> {
    let d = x_train.ncols();
    let mut factors = Vec::new();
    let mut warnings = Vec::new();
    for (i, spec) in cfg.transform.iter().enumerate() {
        let path = format!("transform[{i}]");
        match spec {
            TransformSpec::Fixed(t) => {
                if t.input_dim() != d {
                    return Err(Error::config(path, format!("acts on dimension {}, data has {d}", t.input_dim())));
                }
                factors.push(t.clone());
            }
            TransformSpec::Derived(DerivedTransform::PcaNegationGroups { groups }) => {
                let (dirs, w) = pca_directions(x_train, *groups).map_err(|e| Error::config(&path, e.to_string()))?;
                warnings.extend(w);
                for g in dirs {
                    factors.push(CyclicTransform::pca_negation(g).map_err(|e| Error::config(&path, e.to_string()))?);
                }
            }
            TransformSpec::Derived(DerivedTransform::AxisNegationGroups { groups }) => {
                if *groups > d {
                    return Err(Error::config(path, format!("{groups} groups exceed dimension {d}")));
                }
                for g in 0..*groups {
                    let mask: Vec<usize> = (g..d).step_by(*groups).collect();
                    factors.push(CyclicTransform::negation(d, mask)?);
                }
            }
        }
    }
    if factors.is_empty() {
        return Ok((MultiWayTransform::identity(d), warnings));
    }
    let g = compose(factors, &default_probes(d, 16, cfg.seed)).map_err(|e| Error::config("transform", e.to_string()))?;
    Ok((g, warnings))
}

fn embedded(kernel: &Kernel, x: &DMatrix<f64>) -> DMatrix<f64> {
    match kernel.embedding {
        Embedding::Identity => x.clone(),
        Embedding::LonLatSphere => data::sphere_features(x),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    let data = load_dataset(cfg)?;
    let (x_train, _) = data.train_data();
    if x_train.nrows() == 0 {
        return Err(Error::config("data.source", "training split is empty"));
    }
    let mut kernel = cfg.kernel.clone();
    kernel
        .check_input_dim(data.dim())
        .map_err(|e| Error::config("kernel", e.to_string()))?;
    if cfg.init.median_heuristic {
        let ls = median_heuristic(&embedded(&kernel, &x_train), cfg.init.median_subsample, rng::stream_seed(cfg.seed, "median"))?;
        if ls > 0.0 {
            kernel.lengthscales = vec![ls];
        }
    }
    let (symmetry, mut warnings) = build_symmetry(cfg, &x_train)?;
    warnings.splice(0..0, data.warnings.iter().cloned());
    Ok(Prepared {
        data,
        kernel,
        symmetry,
        warnings,
    })
}

/// `m` inducing inputs from the rows of `x`: k-means centres or a seeded
/// subset.
pub fn inducing_init(x: &DMatrix<f64>, m: usize, use_kmeans: bool, seed: u64) -> Result<DMatrix<f64>> {
    if m > x.nrows() {
        return Err(Error::config(
            "model.inducing",
            format!("{m} inducing points but only {} training rows", x.nrows()),
        ));
    }
    if use_kmeans {
        kmeans_init(x, m, seed)
    } else {
        let mut idx = sample(&mut rng::stream(seed, "inducing"), x.nrows(), m).into_vec();
        idx.sort_unstable();
        Ok(x.select_rows(&idx))
    }
}

fn parts_of(kernel: &Kernel, symmetry: &MultiWayTransform) -> Result<Vec<HarmonicPart>> {
    if symmetry.factors().is_empty() {
        Ok(vec![HarmonicPart::identity(kernel.clone(), symmetry.input_dim())])
    } else {
        real_decomposition(kernel, symmetry.clone()).map_err(|e| Error::config("transform", e.to_string()))
    }
}

/// Model at the prior with `m` shared initial inducing inputs per part.
pub fn initial_model(cfg: &RunConfig, prep: &Prepared, m: usize) -> Result<HvgpModel> {
    let (x_train, _) = prep.data.train_data();
    let z = inducing_init(&x_train, m, cfg.init.kmeans, cfg.seed)?;
    model_with_z(prep, &z, cfg.likelihood, cfg.model.jitter)
}

/// Every part starts from the same `z`.
fn model_with_z(prep: &Prepared, z: &DMatrix<f64>, lik: Likelihood, jitter: Option<f64>) -> Result<HvgpModel> {
    let parts = parts_of(&prep.kernel, &prep.symmetry)?;
    let jitter = jitter.unwrap_or_else(|| default_jitter(&prep.kernel, &[z]));
    let groups = parts
        .iter()
        .map(|p| InducingGroup::at_prior(p, z.clone(), jitter))
        .collect::<Result<Vec<_>>>()?;
    HvgpModel::from_groups(prep.kernel.clone(), prep.symmetry.clone(), groups, lik, jitter)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalMetrics {
    /// Original-unit RMSE; for binary tasks the RMSE of `p(y=1)` against labels.
    pub rmse: f64,
    pub nll: f64,
    pub accuracy: Option<f64>,
}

/// Held-out metrics on the rows `idx` of the dataset.
pub fn evaluate(model: &HvgpModel, ds: &Dataset, idx: &[usize]) -> Result<EvalMetrics> {
    let (x, y) = ds.subset(idx);
    let p = predict(model, &x)?;
    match model.likelihood() {
        Likelihood::Gaussian(g) => {
            let var = p.var.map(|v| v + g.noise_variance);
            let m = data::metrics(&p.mean, &var, &y, &ds.stats)?;
            Ok(EvalMetrics {
                rmse: m.rmse,
                nll: m.nll,
                accuracy: None,
            })
        }
        lik @ Likelihood::Bernoulli(_) => {
            let prob = DVector::from_fn(y.len(), |i, _| lik.predictive(p.mean[i], p.var[i]).0);
            let n = y.len() as f64;
            let se: f64 = prob.iter().zip(y.iter()).map(|(p, t)| (p - t).powi(2)).sum();
            let nll: f64 = prob
                .iter()
                .zip(y.iter())
                .map(|(p, t)| -(if *t > 0.5 { *p } else { 1.0 - p }).max(1e-300).ln())
                .sum();
            Ok(EvalMetrics {
                rmse: (se / n).sqrt(),
                nll: nll / n,
                accuracy: Some(data::accuracy(&prob, &y)),
            })
        }
    }
}

/// Trains the configured model on the training split, tracking
/// validation metrics at every evaluation.
pub fn fit_model(cfg: &RunConfig, prep: &Prepared) -> Result<(HvgpModel, TrainTrace)> {
    let model = initial_model(cfg, prep, cfg.model.inducing)?;
    let (x, y) = prep.data.train_data();
    let mut train = cfg.train.clone();
    train.seed = rng::stream_seed(cfg.seed, "batching");
    let ds = &prep.data;
    let val = |m: &HvgpModel| -> Result<(f64, f64)> {
        let e = evaluate(m, ds, &ds.val)?;
        Ok((e.rmse, e.nll))
    };
    let validator: Option<crate::training::Validator<'_>> = if ds.val.is_empty() { None } else { Some(&val) };
    fit(model, &x, &y, &train, validator)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg.out.clone())
}

fn write_json(path: &PathBuf, value: &impl Serialize) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

/// Runs `verb` on the current rayon pool.
pub fn run(verb: Verb, cfg: &RunConfig) -> Result<RunReport> {
    match verb {
        Verb::Fit => run_fit(cfg),
        Verb::Predict => run_predict(cfg),
        Verb::Decompose => run_decompose(cfg),
        Verb::Diagnose => run_diagnose(cfg),
        Verb::Bench => run_bench(cfg),
    }
}

/// Runs `verb` with a dedicated pool of `threads` workers.
pub fn run_with_threads(verb: Verb, cfg: &RunConfig, threads: Option<usize>) -> Result<RunReport> {
    match threads {
        None => run(verb, cfg),
        Some(0) => Err(Error::config("--threads", "must be positive")),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| Error::Parameter(e.to_string()))?
            .install(|| run(verb, cfg)),
    }
}

fn run_fit(cfg: &RunConfig) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    let start = Instant::now();
    let (model, trace) = fit_model(cfg, &prep)?;
    let wall = start.elapsed().as_secs_f64();
    let dir = out_dir(cfg)?;
    let ckpt = dir.join("checkpoint.json");
    model.save(&ckpt)?;
    let trace_path = dir.join("trace.csv");
    trace.save_csv(&trace_path)?;
    let (x, y) = prep.data.train_data();
    let summary = json!({
        "parts": model.parts().len(),
        "inducing_per_part": cfg.model.inducing,
        "iterations": cfg.train.iterations,
        "train_elbo": elbo(&model, &x, &y, x.nrows())?,
        "val": if prep.data.val.is_empty() { None } else { Some(evaluate(&model, &prep.data, &prep.data.val)?) },
        "test": if prep.data.test.is_empty() { None } else { Some(evaluate(&model, &prep.data, &prep.data.test)?) },
        "n_train": prep.data.train.len(),
        "wall_seconds": wall,
    });
    let metrics_path = dir.join("metrics.json");
    write_json(&metrics_path, &summary)?;
    Ok(RunReport {
        files: vec![ckpt, trace_path, metrics_path],
        summary,
        warnings: prep.warnings,
    })
}

/// Predictions on the test split in original units.
fn run_predict(cfg: &RunConfig) -> Result<RunReport> {
    let data = load_dataset(cfg)?;
    let ckpt = cfg
        .predict
        .checkpoint
        .clone()
        .unwrap_or_else(|| cfg.out.join("checkpoint.json"));
    let model = HvgpModel::load(&ckpt).map_err(|e| Error::config("predict.checkpoint", format!("{}: {e}", ckpt.display())))?;
    if model.input_dim() != data.dim() {
        return Err(Error::config(
            "predict.checkpoint",
            format!("model expects dimension {}, data has {}", model.input_dim(), data.dim()),
        ));
    }
    let (x, y) = data.test_data();
    let p = hvgp_predict(&model, &x)?;
    let st = &data.stats;
    let dir = out_dir(cfg)?;
    let path = dir.join("predictions.csv");
    let mut w = csv::Writer::from_path(&path)?;
    let binary = data.task == Task::Binary;
    let mut header = vec!["index".to_string(), "y".to_string()];
    if binary {
        header.push("prob".into());
    }
    header.extend(["mean".to_string(), "var".to_string()]);
    if cfg.predict.breakdown {
        for t in 0..p.parts.len() {
            header.push(format!("part{t}_mean"));
            header.push(format!("part{t}_var"));
        }
    }
    w.write_record(&header)?;
    let noise = model.likelihood().noise_variance().unwrap_or(0.0);
    let s2 = st.y_std * st.y_std;
    for (r, &i) in data.test.iter().enumerate() {
        let mut row = vec![i.to_string(), full_precision(st.y_to_original(y[r]))];
        if binary {
            row.push(full_precision(model.likelihood().predictive(p.mean[r], p.var[r]).0));
            row.push(full_precision(p.mean[r]));
            row.push(full_precision(p.var[r]));
        } else {
            row.push(full_precision(st.y_to_original(p.mean[r])));
            row.push(full_precision((p.var[r] + noise) * s2));
        }
        if cfg.predict.breakdown {
            for part in &p.parts {
                row.push(full_precision(part.mean[r] * st.y_std));
                row.push(full_precision(part.var[r] * s2));
            }
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(RunReport {
        files: vec![path],
        summary: json!({ "rows": data.test.len(), "parts": p.parts.len() }),
        warnings: data.warnings,
    })
}

fn probe_rows(ds: &Dataset, count: usize) -> Result<DMatrix<f64>> {
    let (x, _) = ds.train_data();
    let k = count.min(x.nrows());
    if k < 2 {
        return Err(Error::config("decompose.probes", "need at least two probes"));
    }
    Ok(x.rows(0, k).into_owned())
}

fn part_label(p: &HarmonicPart) -> String {
    p.index().iter().map(|t| t.to_string()).collect::<Vec<_>>().join(":")
}

fn suite_passes(r: &OrthogonalityReport) -> bool {
    [
        r.max_shift_residual,
        r.max_cross_frequency_residual,
        r.max_quadratic_form_residual,
        r.max_orbit_covariance_residual,
        r.max_decomposition_residual,
        r.max_real_part_residual,
    ]
    .iter()
    .all(|v| *v <= RESIDUAL_TOL)
        && r.min_part_eigenvalue >= EIGENVALUE_TOL
}

fn inter_domain_passes(r: &InterDomainReport) -> bool {
    r.max_cross_residual <= RESIDUAL_TOL && r.max_inducing_residual <= RESIDUAL_TOL && r.max_cross_type <= RESIDUAL_TOL
}

fn require_symmetry(prep: &Prepared, verb: &str) -> Result<()> {
    if prep.symmetry.factors().is_empty() {
        Err(Error::config("transform", format!("`{verb}` needs at least one transform")))
    } else {
        Ok(())
    }
}

/// Per-part kernel values on probe pairs plus the residual report.
fn run_decompose(cfg: &RunConfig) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    require_symmetry(&prep, "decompose")?;
    let x = probe_rows(&prep.data, cfg.decompose.probes)?;
    let parts = if prep.kernel.is_real() {
        real_decomposition(&prep.kernel, prep.symmetry.clone())?
    } else {
        complex_decomposition(&prep.kernel, prep.symmetry.clone())?
    };
    let dir = out_dir(cfg)?;
    let path = dir.join("decompose.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["i", "j", "part", "re", "im"])?;
    let kgram = prep.kernel.gram(&x, &x)?;
    let grams: Vec<_> = parts.iter().map(|p| p.gram(&x, &x)).collect::<Result<_>>()?;
    for i in 0..x.nrows() {
        for j in 0..x.nrows() {
            for (p, g) in parts.iter().zip(&grams) {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    part_label(p),
                    full_precision(g[(i, j)].re),
                    full_precision(g[(i, j)].im),
                ])?;
            }
            w.write_record([
                i.to_string(),
                j.to_string(),
                "k".to_string(),
                full_precision(kgram[(i, j)].re),
                full_precision(kgram[(i, j)].im),
            ])?;
        }
    }
    w.flush()?;
    let report = orthogonality_suite(&prep.kernel, prep.symmetry.clone(), &x)?;
    let summary = json!({ "report": report, "pass": suite_passes(&report) });
    let rpath = dir.join("decompose_report.json");
    write_json(&rpath, &summary)?;
    Ok(RunReport {
        files: vec![path, rpath],
        summary,
        warnings: prep.warnings,
    })
}

/// Trace errors of the configured HVGP (`T_r × m`) and an `m`-point SVGP
/// on at most `rows` training inputs, optionally after optimizing the
/// inducing inputs.
pub fn trace_errors(cfg: &RunConfig, prep: &Prepared, rows: usize) -> Result<(f64, f64)> {
    let (xt, _) = prep.data.train_data();
    let n = rows.min(xt.nrows());
    let x = xt.rows(0, n).into_owned();
    let m = cfg.model.inducing;
    let z = inducing_init(&x, m, cfg.init.kmeans, cfg.seed)?;
    let parts = if prep.kernel.is_real() {
        parts_of(&prep.kernel, &prep.symmetry)?
    } else {
        complex_decomposition(&prep.kernel, prep.symmetry.clone())?
    };
    let svgp = [HarmonicPart::identity(prep.kernel.clone(), x.ncols())];
    let jitter = cfg.model.jitter.unwrap_or_else(|| default_jitter(&prep.kernel, &[&z]));
    let mut zs = vec![z.clone(); parts.len()];
    let mut zsv = vec![z];
    if let Some(opt) = &cfg.diagnose.optimize {
        zs = optimize_trace_error(&parts, &x, zs, jitter, opt)?;
        zsv = optimize_trace_error(&svgp, &x, zsv, jitter, opt)?;
    }
    let h = harmonic_trace_error(&parts, &x, &zs, Some(jitter))?;
    let s = nystrom_trace_error(&prep.kernel, &x, &zsv[0], Some(jitter))?;
    Ok((h, s))
}

fn run_diagnose(cfg: &RunConfig) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    require_symmetry(&prep, "diagnose")?;
    let x = probe_rows(&prep.data, cfg.diagnose.probes)?;
    let suite = orthogonality_suite(&prep.kernel, prep.symmetry.clone(), &x)?;
    let zk = x.rows(0, x.nrows().min(8)).into_owned();
    let xk = x.rows(0, x.nrows().min(20)).into_owned();
    let inter = inter_domain_check(&prep.kernel, prep.symmetry.clone(), &zk, &xk)?;
    let (hvgp, svgp) = trace_errors(cfg, &prep, cfg.diagnose.trace_rows)?;
    let num_parts = parts_of(&prep.kernel, &prep.symmetry)?.len();
    let summary = json!({
        "orthogonality": suite,
        "inter_domain": inter,
        "trace_error": {
            "hvgp": hvgp,
            "svgp": svgp,
            "parts": num_parts,
            "inducing_per_part": cfg.model.inducing,
            "optimized": cfg.diagnose.optimize.is_some(),
        },
        "tolerances": { "residual": RESIDUAL_TOL, "min_eigenvalue": EIGENVALUE_TOL },
        "pass": suite_passes(&suite) && inter_domain_passes(&inter),
    });
    let dir = out_dir(cfg)?;
    let path = dir.join("diagnostics.json");
    write_json(&path, &summary)?;
    Ok(RunReport {
        files: vec![path],
        summary,
        warnings: prep.warnings,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub parts: usize,
    pub inducing_per_part: usize,
    pub svgp_inducing: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub hvgp_step_ms: f64,
    pub svgp_step_ms: f64,
    pub speedup: f64,
    pub hvgp_cholesky_flops: f64,
    pub svgp_cholesky_flops: f64,
    pub flop_ratio: f64,
}

/// Mean wall time in milliseconds of one ELBO-gradient plus Adam step,
/// after one untimed warm-up step.
pub fn time_steps(model: &HvgpModel, x: &DMatrix<f64>, y: &DVector<f64>, n: usize, steps: usize) -> Result<f64> {
    let mut model = model.clone();
    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut step = |model: &mut HvgpModel| -> Result<()> {
        let (_, g) = elbo_grad(model, x, y, n)?;
        let g: Vec<f64> = g.to_flat().iter().map(|v| -v).collect();
        adam_step(&mut adam, &mut params, &g, 1e-3)?;
        model.set_params(&params)
    };
    step(&mut model)?;
    let start = Instant::now();
    for _ in 0..steps {
        step(&mut model)?;
    }
    Ok(start.elapsed().as_secs_f64() * 1e3 / steps.max(1) as f64)
}

pub fn bench_rows(cfg: &RunConfig, prep: &Prepared) -> Result<Vec<BenchRow>> {
    require_symmetry(prep, "bench")?;
    let (xt, yt) = prep.data.train_data();
    let batch = cfg.bench.batch_size.min(xt.nrows());
    let idx: Vec<usize> = (0..batch).collect();
    let (xb, yb) = (xt.select_rows(&idx), yt.select_rows(&idx));
    let mut rows = Vec::new();
    for &m in &cfg.bench.inducing {
        let hvgp = initial_model(cfg, prep, m)?;
        let t = hvgp.parts().len();
        let big = t * m;
        let z = inducing_init(&xt, big, cfg.init.kmeans, cfg.seed)?;
        let svgp_prep = Prepared {
            symmetry: MultiWayTransform::identity(xt.ncols()),
            ..prep.clone()
        };
        let svgp = model_with_z(&svgp_prep, &z, cfg.likelihood, cfg.model.jitter)?;
        let h = time_steps(&hvgp, &xb, &yb, xt.nrows(), cfg.bench.steps)?;
        let s = time_steps(&svgp, &xb, &yb, xt.nrows(), cfg.bench.steps)?;
        let hf = t as f64 * (m as f64).powi(3) / 3.0;
        let sf = (big as f64).powi(3) / 3.0;
        rows.push(BenchRow {
            parts: t,
            inducing_per_part: m,
            svgp_inducing: big,
            batch_size: batch,
            steps: cfg.bench.steps,
            hvgp_step_ms: h,
            svgp_step_ms: s,
            speedup: s / h,
            hvgp_cholesky_flops: hf,
            svgp_cholesky_flops: sf,
            flop_ratio: sf / hf,
        });
    }
    Ok(rows)
}

fn run_bench(cfg: &RunConfig) -> Result<RunReport> {
    let prep = prepare(cfg)?;
    let rows = bench_rows(cfg, &prep)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("bench.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(RunReport {
        files: vec![path],
        summary: serde_json::to_value(&rows)?,
        warnings: prep.warnings,
    })
}
