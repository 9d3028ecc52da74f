//! Run configuration: one JSON document drives every CLI verb.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::data::Task;
use crate::diagnostics::TraceOptConfig;
use crate::error::{Error, Result};
use crate::gp::Likelihood;
use crate::kernels::Kernel;
use crate::training::TrainConfig;
use crate::transforms::CyclicTransform;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every named random stream (data, split, k-means, batching).
    #[serde(default)]
    pub seed: u64,
    pub data: DataConfig,
    pub kernel: Kernel,
    /// Commuting factors of the symmetry; empty means a plain SVGP.
    #[serde(default)]
    pub transform: Vec<TransformSpec>,
    pub model: ModelShape,
    pub likelihood: Likelihood,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub init: InitConfig,
    #[serde(default)]
    pub predict: PredictConfig,
    #[serde(default)]
    pub decompose: DecomposeConfig,
    #[serde(default)]
    pub diagnose: DiagnoseConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_out() -> PathBuf {
    PathBuf::from("hgp-out")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Defaults to standardizing both, except torus-grid inputs, whose
    /// longitude must stay in degrees for the shift transform.
    #[serde(default)]
    pub standardize: Option<StandardizeConfig>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandardizeConfig {
    pub x: bool,
    pub y: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default = "regression")]
        task: Task,
    },
    #[serde(rename = "symmetric_1d")]
    Symmetric1d { n: usize },
    SymmetricGaussian { n: usize, d: usize },
    TorusGrid { n_lon: usize, n_lat: usize },
    FlipImages { n: usize, side: usize },
}

fn regression() -> Task {
    Task::Regression
}

impl DataConfig {
    pub fn standardize(&self) -> StandardizeConfig {
        self.standardize.unwrap_or(match self.source {
            DataSource::TorusGrid { .. } => StandardizeConfig { x: false, y: true },
            _ => StandardizeConfig { x: true, y: true },
        })
    }
}

/// A fixed transform descriptor, or a data-dependent group of negations
/// expanded once the training inputs are known.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum TransformSpec {
    Fixed(CyclicTransform),
    Derived(DerivedTransform),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DerivedTransform {
    /// `groups` reflections over round-robin principal directions.
    PcaNegationGroups { groups: usize },
    /// `groups` negations over round-robin coordinate axes.
    AxisNegationGroups { groups: usize },
}

impl<'de> Deserialize<'de> for TransformSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let v = serde_json::Value::deserialize(d)?;
        let kind = v.get("kind").and_then(|k| k.as_str()).unwrap_or_default();
        if kind.ends_with("_groups") {
            serde_json::from_value(v).map(TransformSpec::Derived).map_err(D::Error::custom)
        } else {
            serde_json::from_value(v).map(TransformSpec::Fixed).map_err(D::Error::custom)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    /// Inducing points per part (`m`); the SVGP size when there is no transform.
    pub inducing: usize,
    /// Absolute diagonal jitter; defaults to a small multiple of the prior variance.
    #[serde(default)]
    pub jitter: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// k-means inducing inputs; otherwise a seeded subset of training rows.
    #[serde(default = "yes")]
    pub kmeans: bool,
    /// Replace the configured lengthscales by the median pairwise distance.
    #[serde(default)]
    pub median_heuristic: bool,
    #[serde(default = "default_subsample")]
    pub median_subsample: usize,
}

fn yes() -> bool {
    true
}

fn default_subsample() -> usize {
    1000
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            kmeans: true,
            median_heuristic: false,
            median_subsample: default_subsample(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    /// Per-part mean and variance columns.
    #[serde(default)]
    pub breakdown: bool,
    /// Defaults to `<out>/checkpoint.json`.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeConfig {
    /// Number of training inputs used as probes.
    #[serde(default = "default_probes")]
    pub probes: usize,
}

fn default_probes() -> usize {
    20
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        DecomposeConfig { probes: default_probes() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    #[serde(default = "default_suite_probes")]
    pub probes: usize,
    /// Training rows used for the trace error.
    #[serde(default = "default_trace_rows")]
    pub trace_rows: usize,
    /// Optimize inducing inputs before reporting trace errors.
    #[serde(default)]
    pub optimize: Option<TraceOptConfig>,
}

fn default_suite_probes() -> usize {
    50
}

fn default_trace_rows() -> usize {
    1000
}

impl Default for DiagnoseConfig {
    fn default() -> Self {
        DiagnoseConfig {
            probes: default_suite_probes(),
            trace_rows: default_trace_rows(),
            optimize: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    /// Per-part sizes `m`; each is compared against an SVGP with `T_r·m` points.
    #[serde(default = "default_bench_inducing")]
    pub inducing: Vec<usize>,
    #[serde(default = "default_bench_steps")]
    pub steps: usize,
    #[serde(default = "default_bench_batch")]
    pub batch_size: usize,
}

fn default_bench_inducing() -> Vec<usize> {
    vec![16, 32]
}

fn default_bench_steps() -> usize {
    3
}

fn default_bench_batch() -> usize {
    256
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            inducing: default_bench_inducing(),
            steps: default_bench_steps(),
            batch_size: default_bench_batch(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate().map_err(|e| Error::config("kernel", e.to_string()))?;
        self.likelihood
            .validate()
            .map_err(|e| Error::config("likelihood", e.to_string()))?;
        if self.model.inducing == 0 {
            return Err(Error::config("model.inducing", "must be positive"));
        }
        if let Some(j) = self.model.jitter {
            if !(j >= 0.0 && j.is_finite()) {
                return Err(Error::config("model.jitter", "must be finite and non-negative"));
            }
        }
        match &self.data.source {
            DataSource::Csv { path, .. } if !path.exists() => {
                return Err(Error::config("data.source.path", format!("{} does not exist", path.display())));
            }
            DataSource::Csv { task, .. } => self.check_task(*task)?,
            DataSource::FlipImages { .. } => self.check_task(Task::Binary)?,
            _ => self.check_task(Task::Regression)?,
        }
        for (i, t) in self.transform.iter().enumerate() {
            match t {
                TransformSpec::Fixed(c) => c.validate(),
                TransformSpec::Derived(DerivedTransform::PcaNegationGroups { groups })
                | TransformSpec::Derived(DerivedTransform::AxisNegationGroups { groups }) => {
                    if *groups == 0 {
                        Err(Error::Parameter("groups must be positive".into()))
                    } else {
                        Ok(())
                    }
                }
            }
            .map_err(|e| Error::config(format!("transform[{i}]"), e.to_string()))?;
        }
        if self.train.learning_rate <= 0.0 || !self.train.learning_rate.is_finite() {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.bench.inducing.iter().any(|&m| m == 0) {
            return Err(Error::config("bench.inducing", "sizes must be positive"));
        }
        if self.init.median_subsample < 2 {
            return Err(Error::config("init.median_subsample", "must be at least 2"));
        }
        Ok(())
    }

    fn check_task(&self, task: Task) -> Result<()> {
        let ok = matches!(
            (task, &self.likelihood),
            (Task::Regression, Likelihood::Gaussian(_)) | (Task::Binary, Likelihood::Bernoulli(_))
        );
        if ok {
            Ok(())
        } else {
            Err(Error::config("likelihood", format!("does not match a {task:?} dataset")))
        }
    }
}
