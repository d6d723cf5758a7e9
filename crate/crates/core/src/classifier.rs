//! The expandable OL classification head.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen::{validate_label, HeadSeed};
use crate::math::{affine, argmax, softmax, Matrix};
use crate::strategies::StrategyKind;

pub const DEFAULT_MAX_CLASSES: usize = 64;

/// Bytes per stored parameter (`f32`) and per counter.
const CELL_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: Vec<f32>,
    pub logits: Vec<f32>,
    pub predicted: usize,
    pub predicted_label: String,
}

/// Weights `n x m`, biases `n`, and one label per row in arrival order.
#[derive(Debug, Clone, PartialEq)]
pub struct OlLayer {
    weights: Matrix,
    biases: Vec<f32>,
    labels: Vec<String>,
    known_at_start: usize,
    max_classes: usize,
}

impl OlLayer {
    pub fn from_seed(seed: &HeadSeed) -> Result<Self> {
        Self::from_seed_with_cap(seed, DEFAULT_MAX_CLASSES)
    }

    pub fn from_seed_with_cap(seed: &HeadSeed, max_classes: usize) -> Result<Self> {
        seed.validate()?;
        if seed.labels.len() > max_classes {
            return Err(Error::ClassCapExceeded {
                cap: max_classes,
                label: seed.labels[max_classes].clone(),
            });
        }
        Ok(Self {
            weights: seed.weights.clone(),
            biases: seed.biases.clone(),
            labels: seed.labels.clone(),
            known_at_start: seed.labels.len(),
            max_classes,
        })
    }

    /// Restores a layer whose first `known_at_start` rows came from the seed.
    pub(crate) fn restore(seed: &HeadSeed, known_at_start: usize, max_classes: usize) -> Result<Self> {
        let mut layer = Self::from_seed_with_cap(seed, max_classes)?;
        if known_at_start > layer.n() {
            return Err(Error::InvalidHead(format!(
                "known_at_start {known_at_start} exceeds {} rows",
                layer.n()
            )));
        }
        layer.known_at_start = known_at_start;
        Ok(layer)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn m(&self) -> usize {
        self.weights.cols()
    }

    /// Row count of the seed head (the first unknown class index).
    pub fn known_at_start(&self) -> usize {
        self.known_at_start
    }

    pub fn max_classes(&self) -> usize {
        self.max_classes
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn biases(&self) -> &[f32] {
        &self.biases
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub(crate) fn params_mut(&mut self) -> (&mut Matrix, &mut Vec<f32>) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Returns the row for `label`, appending a zero row and bias first when
    /// the label is new. The bool reports whether a row was added.
    pub fn ensure_class(&mut self, label: &str) -> Result<(usize, bool)> {
        if let Some(i) = self.index_of(label) {
            return Ok((i, false));
        }
        validate_label(label)?;
        if self.n() >= self.max_classes {
            return Err(Error::ClassCapExceeded {
                cap: self.max_classes,
                label: label.to_owned(),
            });
        }
        self.weights.push_zero_row();
        self.biases.push(0.0);
        self.labels.push(label.to_owned());
        Ok((self.n() - 1, true))
    }

    pub fn infer(&self, features: &[f32]) -> Result<Prediction> {
        predict_with(&self.weights, &self.biases, &self.labels, features)
    }

    pub fn to_head_seed(&self) -> HeadSeed {
        HeadSeed {
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Analytic footprint of the OL structures for `kind` at the current size.
    pub fn memory_bytes(&self, kind: StrategyKind) -> usize {
        memory_bytes(kind, self.n(), self.m(), self.known_at_start)
    }
}

/// Inference over an arbitrary parameter set sharing the layer's labels.
pub(crate) fn predict_with(
    weights: &Matrix,
    biases: &[f32],
    labels: &[String],
    features: &[f32],
) -> Result<Prediction> {
    let logits = affine(weights, features, biases)?;
    let probabilities = softmax(&logits);
    let predicted = argmax(&probabilities);
    Ok(Prediction {
        predicted_label: labels[predicted].clone(),
        probabilities,
        logits,
        predicted,
    })
}

/// Bytes held by the base layer plus the strategy's auxiliary containers,
/// counting 4 bytes per float or counter.
pub fn memory_bytes(kind: StrategyKind, n: usize, m: usize, known_at_start: usize) -> usize {
    let layer = CELL_BYTES * (n * m + n);
    let aux = match kind {
        StrategyKind::TinyOl | StrategyKind::TinyOlV2 => 0,
        StrategyKind::TinyOlBatches | StrategyKind::Lwf | StrategyKind::LwfBatches => layer,
        StrategyKind::TinyOlV2Batches => {
            let new = n.saturating_sub(known_at_start);
            CELL_BYTES * (new * m + new)
        }
        StrategyKind::Cwr => layer + CELL_BYTES * n,
    };
    layer + aux
}
