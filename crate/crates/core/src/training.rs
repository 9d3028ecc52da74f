//! Adam-based ELBO maximization with seeded per-epoch minibatches.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{elbo_grad, HvgpModel};
use crate::rng;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }
}

/// One bias-corrected Adam descent step on `params`.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, state of {}",
            n,
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    for i in 0..n {
        let g = grads[i];
        state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
        state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
    }
    Ok(())
}

/// Multiply the learning rate by `factor` every `every` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecay {
    pub factor: f64,
    pub every: usize,
}

fn default_lr() -> f64 {
    0.01
}
fn default_iterations() -> usize {
    1000
}
fn default_batch() -> usize {
    256
}
fn default_eval_every() -> usize {
    100
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub lr_schedule: Option<StepDecay>,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    /// Optimize inducing inputs.
    #[serde(default = "yes")]
    pub train_inducing: bool,
    /// Optimize kernel and likelihood hyperparameters.
    #[serde(default = "yes")]
    pub train_hyper: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            iterations: default_iterations(),
            batch_size: default_batch(),
            seed: 0,
            lr_schedule: None,
            eval_every: default_eval_every(),
            train_inducing: true,
            train_hyper: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_size == 0 || self.batch_size > n {
            return Err(Error::config(
                "train.batch_size",
                format!("must be in 1..={n}, got {}", self.batch_size),
            ));
        }
        if self.eval_every == 0 {
            return Err(Error::config("train.eval_every", "must be positive"));
        }
        if let Some(s) = self.lr_schedule {
            if !(s.factor > 0.0) || s.every == 0 {
                return Err(Error::config("train.lr_schedule", "factor and every must be positive"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        match self.lr_schedule {
            Some(s) => self.learning_rate * s.factor.powi((iteration / s.every) as i32),
            None => self.learning_rate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub elbo: f64,
    pub wall_ms: f64,
    pub val_rmse: Option<f64>,
    pub val_nll: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub(crate) fn full_precision(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(full_precision).unwrap_or_default()
}

impl TrainTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "elbo", "wall_ms", "val_rmse", "val_nll"])?;
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                full_precision(r.elbo),
                format!("{:.3}", r.wall_ms),
                fmt_opt(r.val_rmse),
                fmt_opt(r.val_nll),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Seeded minibatch indices: a fresh permutation per epoch cut into
/// consecutive batches, so each point appears once per epoch.
pub struct Batcher {
    rng: rng::Rng,
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl Batcher {
    pub fn new(n: usize, batch: usize, seed: u64) -> Self {
        Batcher {
            rng: rng::stream(seed, "batching"),
            order: (0..n).collect(),
            pos: n,
            batch,
        }
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.sort_unstable();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        out
    }
}

fn trainable_mask(model: &HvgpModel, config: &TrainConfig) -> Vec<bool> {
    let mut mask = Vec::with_capacity(model.num_params());
    for g in model.groups() {
        let m = g.len();
        mask.extend(std::iter::repeat_n(config.train_inducing, m * g.z.ncols()));
        mask.extend(std::iter::repeat_n(true, m + m * (m + 1) / 2));
    }
    let nh = model.kernel().num_hyper() + model.likelihood().num_hyper();
    mask.extend(std::iter::repeat_n(config.train_hyper, nh));
    mask
}

/// Optional validation callback returning `(rmse, nll)`.
pub type Validator<'a> = &'a dyn Fn(&HvgpModel) -> Result<(f64, f64)>;

/// Maximizes the ELBO with Adam. On a numerical failure the error carries
/// the iteration and the last parameters that evaluated cleanly.
pub fn fit(
    mut model: HvgpModel,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &TrainConfig,
    validate: Option<Validator<'_>>,
) -> Result<(HvgpModel, TrainTrace)> {
    let n = x.nrows();
    if n != y.len() {
        return Err(Error::Shape(format!("{n} inputs but {} targets", y.len())));
    }
    config.validate(n)?;
    let mut trace = TrainTrace::default();
    let mut params = model.params();
    let mask = trainable_mask(&model, config);
    let mut adam = AdamState::new(params.len());
    let mut batcher = Batcher::new(n, config.batch_size, config.seed);
    let start = Instant::now();
    for it in 0..config.iterations {
        let idx = batcher.next_batch();
        let xb = x.select_rows(&idx);
        let yb = y.select_rows(&idx);
        let fail = |reason: String, last: &[f64]| Error::Training {
            iteration: it,
            reason,
            last_good: last.to_vec(),
        };
        let (value, grad) = elbo_grad(&model, &xb, &yb, n).map_err(|e| fail(e.to_string(), &params))?;
        let mut g = grad.to_flat();
        if g.iter().any(|v| !v.is_finite()) {
            return Err(fail("non-finite gradient".into(), &params));
        }
        for (gi, keep) in g.iter_mut().zip(&mask) {
            *gi = if *keep { -*gi } else { 0.0 };
        }
        if it % config.eval_every == 0 {
            let (val_rmse, val_nll) = match validate {
                Some(f) => {
                    let (r, l) = f(&model).map_err(|e| fail(e.to_string(), &params))?;
                    (Some(r), Some(l))
                }
                None => (None, None),
            };
            trace.records.push(TraceRecord {
                iter: it,
                elbo: value,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
                val_rmse,
                val_nll,
            });
        }
        let mut next = params.clone();
        adam_step(&mut adam, &mut next, &g, config.lr_at(it))?;
        model
            .set_params(&next)
            .map_err(|e| fail(e.to_string(), &params))?;
        params = next;
    }
    Ok((model, trace))
}

/// Central differences `(f(p + εe_i) − f(p − εe_i)) / 2ε`.
pub fn finite_diff_grad<F: FnMut(&[f64]) -> f64>(mut f: F, params: &[f64], eps: f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + eps;
            let hi = f(&p);
            p[i] = orig - eps;
            let lo = f(&p);
            p[i] = orig;
            (hi - lo) / (2.0 * eps)
        })
        .collect()
}
