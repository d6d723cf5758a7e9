//! Continual-learning update rules for the OL head.
//!
//! Every rule uses the softmax + cross-entropy per-logit gradient `y - t`,
//! where `y` is the head's prediction and `t` the one-hot truth. Each
//! [`OnlineLearner::train_step`] runs, in order: class expansion (growing
//! every auxiliary container with zero rows), inference with the training
//! layer, then the strategy's update.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::{predict_with, OlLayer, Prediction};
use crate::error::{Error, Result};
use crate::frozen::HeadSeed;
use crate::math::{one_hot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[serde(rename = "tinyol")]
    TinyOl,
    #[serde(rename = "tinyol_batches")]
    TinyOlBatches,
    #[serde(rename = "tinyol_v2")]
    TinyOlV2,
    #[serde(rename = "tinyol_v2_batches")]
    TinyOlV2Batches,
    Lwf,
    LwfBatches,
    Cwr,
}

impl StrategyKind {
    /// Comparison-table column order.
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::TinyOl,
        StrategyKind::TinyOlBatches,
        StrategyKind::TinyOlV2,
        StrategyKind::TinyOlV2Batches,
        StrategyKind::Lwf,
        StrategyKind::LwfBatches,
        StrategyKind::Cwr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::TinyOl => "tinyol",
            StrategyKind::TinyOlBatches => "tinyol_batches",
            StrategyKind::TinyOlV2 => "tinyol_v2",
            StrategyKind::TinyOlV2Batches => "tinyol_v2_batches",
            StrategyKind::Lwf => "lwf",
            StrategyKind::LwfBatches => "lwf_batches",
            StrategyKind::Cwr => "cwr",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            StrategyKind::TinyOl => "TinyOL",
            StrategyKind::TinyOlBatches => "TinyOL batches",
            StrategyKind::TinyOlV2 => "TinyOL V2",
            StrategyKind::TinyOlV2Batches => "TinyOL V2 batches",
            StrategyKind::Lwf => "LWF",
            StrategyKind::LwfBatches => "LWF batches",
            StrategyKind::Cwr => "CWR",
        }
    }

    /// Learning rate used when a config leaves it unset. CWR's consolidated
    /// layer moves by roughly `α / (updates + 1)` per batch, so it gets a
    /// larger step than the others.
    pub fn default_learning_rate(self) -> f32 {
        match self {
            StrategyKind::Cwr => 0.02,
            _ => 0.005,
        }
    }

    pub fn uses_batches(self) -> bool {
        matches!(
            self,
            StrategyKind::TinyOlBatches | StrategyKind::TinyOlV2Batches | StrategyKind::LwfBatches | StrategyKind::Cwr
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| {
            let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.as_str()).collect();
            Error::Config(format!("unknown strategy {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub learning_rate: f32,
    pub batch_size: usize,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, learning_rate: f32, batch_size: usize) -> Result<Self> {
        let cfg = Self {
            kind,
            learning_rate,
            batch_size,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The learning rate must be positive and finite; zero is allowed as a
    /// frozen-head baseline.
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A weight matrix and bias vector with no labels of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub weights: Matrix,
    pub biases: Vec<f32>,
}

impl ParamSet {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            weights: Matrix::zeros(rows, cols),
            biases: vec![0.0; rows],
        }
    }

    fn of(layer: &OlLayer) -> Self {
        Self {
            weights: layer.weights().clone(),
            biases: layer.biases().to_vec(),
        }
    }

    fn push_zero_row(&mut self) {
        self.weights.push_zero_row();
        self.biases.push(0.0);
    }
}

/// Batch accumulators `W`, `B`. Accumulator row `r` belongs to layer row
/// `row_offset + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub sums: ParamSet,
    pub row_offset: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyState {
    Plain,
    Batch(Accumulator),
    Lwf {
        copy: ParamSet,
        prediction_counter: u64,
        since_copy: usize,
    },
    Cwr {
        consolidated: ParamSet,
        updates: Vec<u64>,
        batch_counts: Vec<u64>,
        in_batch: usize,
    },
}

impl StrategyState {
    pub fn new(kind: StrategyKind, layer: &OlLayer) -> Self {
        let (n, m, p) = (layer.n(), layer.m(), layer.known_at_start());
        match kind {
            StrategyKind::TinyOl | StrategyKind::TinyOlV2 => StrategyState::Plain,
            StrategyKind::TinyOlBatches => StrategyState::Batch(Accumulator {
                sums: ParamSet::zeros(n, m),
                row_offset: 0,
                samples: 0,
            }),
            StrategyKind::TinyOlV2Batches => StrategyState::Batch(Accumulator {
                sums: ParamSet::zeros(n - p, m),
                row_offset: p,
                samples: 0,
            }),
            StrategyKind::Lwf | StrategyKind::LwfBatches => StrategyState::Lwf {
                copy: ParamSet::of(layer),
                prediction_counter: 0,
                since_copy: 0,
            },
            StrategyKind::Cwr => StrategyState::Cwr {
                consolidated: ParamSet::of(layer),
                updates: vec![0; n],
                batch_counts: vec![0; n],
                in_batch: 0,
            },
        }
    }

    /// Adds the zero row/cell for a class just appended to the layer.
    fn grow(&mut self) {
        match self {
            StrategyState::Plain => {}
            StrategyState::Batch(acc) => acc.sums.push_zero_row(),
            StrategyState::Lwf { copy, .. } => copy.push_zero_row(),
            StrategyState::Cwr {
                consolidated,
                updates,
                batch_counts,
                ..
            } => {
                consolidated.push_zero_row();
                updates.push(0);
                batch_counts.push(0);
            }
        }
    }
}

/// `w[i][j] -= α (y_i - t_i) x_j`, `b_i -= α (y_i - t_i)` for rows `first_row..n`.
pub fn update_tinyol(
    weights: &mut Matrix,
    biases: &mut [f32],
    alpha: f32,
    y: &[f32],
    t: &[f32],
    x: &[f32],
    first_row: usize,
) {
    for i in first_row..biases.len() {
        let g = alpha * (y[i] - t[i]);
        for (w, &xj) in weights.row_mut(i).iter_mut().zip(x) {
            *w -= g * xj;
        }
        biases[i] -= g;
    }
}

/// `W += α (y - t) x`, `B += α (y - t)` over the accumulator's rows.
pub fn accumulate(acc: &mut Accumulator, alpha: f32, y: &[f32], t: &[f32], x: &[f32]) {
    for r in 0..acc.sums.biases.len() {
        let i = acc.row_offset + r;
        let g = alpha * (y[i] - t[i]);
        for (w, &xj) in acc.sums.weights.row_mut(r).iter_mut().zip(x) {
            *w += g * xj;
        }
        acc.sums.biases[r] += g;
    }
    acc.samples += 1;
}

/// `w -= W / count`, `b -= B / count`, then clears the accumulator.
pub fn apply_accumulated(weights: &mut Matrix, biases: &mut [f32], acc: &mut Accumulator) {
    if acc.samples == 0 {
        return;
    }
    let count = acc.samples as f32;
    for r in 0..acc.sums.biases.len() {
        let i = acc.row_offset + r;
        for (w, &d) in weights.row_mut(i).iter_mut().zip(acc.sums.weights.row(r)) {
            *w -= d / count;
        }
        biases[i] -= acc.sums.biases[r] / count;
    }
    acc.sums.weights.fill(0.0);
    acc.sums.biases.fill(0.0);
    acc.samples = 0;
}

/// LWF weight: `100 / (100 + prediction_counter)`.
pub fn lwf_lambda(prediction_counter: u64) -> f32 {
    (100.0 / (100.0 + prediction_counter as f64)) as f32
}

/// LWF-batches weight: `batch_size / prediction_counter`, clamped to `[0, 1]`
/// (so it is 1 until the counter passes the batch size).
pub fn lwf_batches_lambda(batch_size: usize, prediction_counter: u64) -> f32 {
    if prediction_counter == 0 {
        return 1.0;
    }
    (batch_size as f64 / prediction_counter as f64).clamp(0.0, 1.0) as f32
}

/// Gradient step on `(1-λ) CE(y, t) + λ CE(y, z)` with `z` held constant:
/// per-logit gradient `(1-λ)(y - t) + λ(y - z)`.
#[allow(clippy::too_many_arguments)]
pub fn update_lwf(
    weights: &mut Matrix,
    biases: &mut [f32],
    alpha: f32,
    lambda: f32,
    y: &[f32],
    z: &[f32],
    t: &[f32],
    x: &[f32],
) {
    for i in 0..biases.len() {
        let g = alpha * ((1.0 - lambda) * (y[i] - t[i]) + lambda * (y[i] - z[i]));
        for (w, &xj) in weights.row_mut(i).iter_mut().zip(x) {
            *w -= g * xj;
        }
        biases[i] -= g;
    }
}

/// End-of-batch CWR merge: `cw = (cw·updates + tw) / (updates + 1)` row by
/// row, then the training layer is reset to `cw`.
pub fn consolidate_cwr(train_w: &mut Matrix, train_b: &mut [f32], consolidated: &mut ParamSet, updates: &[u64]) {
    for (i, &u) in updates.iter().enumerate() {
        let u = u as f32;
        let denom = u + 1.0;
        for (c, &tw) in consolidated.weights.row_mut(i).iter_mut().zip(train_w.row(i)) {
            *c += (tw - *c) / denom;
        }
        consolidated.biases[i] += (train_b[i] - consolidated.biases[i]) / denom;
    }
    train_w.as_mut_slice().copy_from_slice(consolidated.weights.as_slice());
    train_b.copy_from_slice(&consolidated.biases);
}

/// An OL head together with its strategy state.
#[derive(Debug, Clone, PartialEq)]
pub struct OnlineLearner {
    layer: OlLayer,
    state: StrategyState,
    cfg: StrategyConfig,
}

impl OnlineLearner {
    pub fn new(layer: OlLayer, cfg: StrategyConfig) -> Result<Self> {
        cfg.validate()?;
        let state = StrategyState::new(cfg.kind, &layer);
        Ok(Self { layer, state, cfg })
    }

    pub fn from_seed(seed: &HeadSeed, cfg: StrategyConfig, max_classes: usize) -> Result<Self> {
        Self::new(OlLayer::from_seed_with_cap(seed, max_classes)?, cfg)
    }

    pub(crate) fn from_parts(layer: OlLayer, state: StrategyState, cfg: StrategyConfig) -> Self {
        Self { layer, state, cfg }
    }

    pub fn layer(&self) -> &OlLayer {
        &self.layer
    }

    pub fn state(&self) -> &StrategyState {
        &self.state
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.cfg
    }

    pub fn memory_bytes(&self) -> usize {
        self.layer.memory_bytes(self.cfg.kind)
    }

    /// Registers `label` (growing state if new) and returns its row.
    pub fn ensure_class(&mut self, label: &str) -> Result<usize> {
        let (row, was_new) = self.layer.ensure_class(label)?;
        if was_new {
            self.state.grow();
        }
        Ok(row)
    }

    /// One supervised step. Returns the prediction made before the update.
    pub fn train_step(&mut self, features: &[f32], label: &str) -> Result<Prediction> {
        if features.len() != self.layer.m() {
            return Err(Error::shape(
                "OL layer",
                format!("m = {}", self.layer.m()),
                "features",
                format!("len {}", features.len()),
            ));
        }
        let row = self.ensure_class(label)?;
        let pred = self.layer.infer(features)?;
        let t = one_hot(self.layer.n(), row);
        let y = &pred.probabilities;
        let alpha = self.cfg.learning_rate;
        let k = self.cfg.batch_size;
        let p = self.layer.known_at_start();
        let labels_len = self.layer.n();
        let (weights, biases) = self.layer.params_mut();

        match (&mut self.state, self.cfg.kind) {
            (StrategyState::Plain, StrategyKind::TinyOl) => update_tinyol(weights, biases, alpha, y, &t, features, 0),
            (StrategyState::Plain, StrategyKind::TinyOlV2) => update_tinyol(weights, biases, alpha, y, &t, features, p),
            (StrategyState::Batch(acc), StrategyKind::TinyOlBatches | StrategyKind::TinyOlV2Batches) => {
                accumulate(acc, alpha, y, &t, features);
                if acc.samples == k {
                    apply_accumulated(weights, biases, acc);
                }
            }
            (
                StrategyState::Lwf {
                    copy,
                    prediction_counter,
                    since_copy,
                },
                kind @ (StrategyKind::Lwf | StrategyKind::LwfBatches),
            ) => {
                let z = crate::math::softmax(&crate::math::affine(&copy.weights, features, &copy.biases)?);
                let lambda = if kind == StrategyKind::Lwf {
                    lwf_lambda(*prediction_counter)
                } else {
                    lwf_batches_lambda(k, *prediction_counter)
                };
                update_lwf(weights, biases, alpha, lambda, y, &z, &t, features);
                *prediction_counter += 1;
                if kind == StrategyKind::LwfBatches {
                    *since_copy += 1;
                    if *since_copy == k {
                        copy.weights = weights.clone();
                        copy.biases.clone_from(biases);
                        *since_copy = 0;
                    }
                }
            }
            (
                StrategyState::Cwr {
                    consolidated,
                    updates,
                    batch_counts,
                    in_batch,
                },
                StrategyKind::Cwr,
            ) => {
                debug_assert_eq!(updates.len(), labels_len);
                update_tinyol(weights, biases, alpha, y, &t, features, 0);
                batch_counts[row] += 1;
                *in_batch += 1;
                if *in_batch == k {
                    finish_cwr_batch(weights, biases, consolidated, updates, batch_counts, in_batch);
                }
            }
            (state, kind) => unreachable!("state {state:?} does not belong to {kind}"),
        }
        Ok(pred)
    }

    /// Flushes a partial batch at end of stream, using the actual sample
    /// count in place of the batch size.
    pub fn finish(&mut self) {
        let kind = self.cfg.kind;
        let (weights, biases) = self.layer.params_mut();
        match &mut self.state {
            StrategyState::Plain => {}
            StrategyState::Batch(acc) => apply_accumulated(weights, biases, acc),
            StrategyState::Lwf { copy, since_copy, .. } => {
                if kind == StrategyKind::LwfBatches && *since_copy > 0 {
                    copy.weights = weights.clone();
                    copy.biases.clone_from(biases);
                    *since_copy = 0;
                }
            }
            StrategyState::Cwr {
                consolidated,
                updates,
                batch_counts,
                in_batch,
            } => {
                if *in_batch > 0 {
                    finish_cwr_batch(weights, biases, consolidated, updates, batch_counts, in_batch);
                }
            }
        }
    }

    /// Evaluation-time prediction: CWR answers from its consolidated layer,
    /// every other strategy from the training layer. No state changes.
    pub fn predict_for_eval(&self, features: &[f32]) -> Result<Prediction> {
        match &self.state {
            StrategyState::Cwr { consolidated, .. } => predict_with(
                &consolidated.weights,
                &consolidated.biases,
                self.layer.labels(),
                features,
            ),
            _ => self.layer.infer(features),
        }
    }

    /// The head used for evaluation, as a seed (e.g. to hand to another run).
    pub fn eval_head(&self) -> HeadSeed {
        match &self.state {
            StrategyState::Cwr { consolidated, .. } => HeadSeed {
                weights: consolidated.weights.clone(),
                biases: consolidated.biases.clone(),
                labels: self.layer.labels().to_vec(),
            },
            _ => self.layer.to_head_seed(),
        }
    }
}

fn finish_cwr_batch(
    weights: &mut Matrix,
    biases: &mut [f32],
    consolidated: &mut ParamSet,
    updates: &mut [u64],
    batch_counts: &mut [u64],
    in_batch: &mut usize,
) {
    consolidate_cwr(weights, biases, consolidated, updates);
    for (u, c) in updates.iter_mut().zip(batch_counts.iter_mut()) {
        *u += *c;
        *c = 0;
    }
    *in_batch = 0;
}
