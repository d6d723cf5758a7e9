//! Gaussian-cluster datasets standing in for the accelerometer recordings.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frozen::{HeadSeed, Shape};
use crate::harness::dataset::{Dataset, InputKind, Sample};
use crate::harness::experiment::{run_experiment, RunOptions};
use crate::harness::stream::{build_stream, PseudoTest};
use crate::math::SeededRng;
use crate::strategies::{StrategyConfig, StrategyKind};

/// One isotropic Gaussian per class: `sample = mean + spread * N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub labels: Vec<String>,
    pub means: Vec<Vec<f32>>,
    pub spread: f32,
    pub samples_per_class: usize,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Draws class means with i.i.d. `N(0, separation^2)` entries from
    /// `mean_seed`. Sample noise comes from `seed`.
    pub fn with_random_means(
        labels: Vec<String>,
        feature_len: usize,
        separation: f32,
        spread: f32,
        samples_per_class: usize,
        mean_seed: u64,
        seed: u64,
    ) -> Self {
        let mut rng = SeededRng::new(mean_seed);
        let means = labels
            .iter()
            .map(|_| {
                (0..feature_len)
                    .map(|_| separation * rng.sample::<f32, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self {
            labels,
            means,
            spread,
            samples_per_class,
            seed,
        }
    }

    /// Default labels `c0, c1, ...`.
    pub fn default_labels(classes: usize) -> Vec<String> {
        (0..classes).map(|i| format!("c{i}")).collect()
    }

    pub fn feature_len(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() < 2 {
            return Err(Error::Config("synthetic data needs at least 2 classes".into()));
        }
        if self.means.len() != self.labels.len() {
            return Err(Error::Config("one mean vector per class is required".into()));
        }
        let m = self.feature_len();
        if m == 0 || self.means.iter().any(|v| v.len() != m) {
            return Err(Error::Config("mean vectors must share a nonzero length".into()));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::Config(format!("spread must be > 0, got {}", self.spread)));
        }
        Ok(())
    }

    /// Same means and spread restricted to the first `classes` labels, with
    /// fresh noise from `seed`.
    pub fn subset(&self, classes: usize, samples_per_class: usize, seed: u64) -> Self {
        Self {
            labels: self.labels[..classes].to_vec(),
            means: self.means[..classes].to_vec(),
            spread: self.spread,
            samples_per_class,
            seed,
        }
    }

    fn id(&self) -> String {
        format!(
            "synthetic:k{}:m{}:n{}:s{}:seed{}",
            self.labels.len(),
            self.feature_len(),
            self.samples_per_class,
            self.spread,
            self.seed
        )
    }
}

/// Generates samples class by class. Deterministic in `spec`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let mut samples = Vec::with_capacity(spec.labels.len() * spec.samples_per_class);
    for (label, mean) in spec.labels.iter().zip(&spec.means) {
        for _ in 0..spec.samples_per_class {
            let input = mean
                .iter()
                .map(|&mu| mu + spec.spread * rng.sample::<f32, _>(StandardNormal))
                .collect();
            samples.push(Sample {
                input,
                label: label.clone(),
            });
        }
    }
    Dataset::new(
        spec.id(),
        InputKind::PrecomputedFeatures,
        Shape::Flat(spec.feature_len()),
        samples,
    )
}

/// Parameters for fitting an initial head before the online stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Warmup {
    pub classes: usize,
    pub samples_per_class: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

/// Fits a head on the first `warmup.classes` classes of `spec` by running
/// TinyOL from a zero head over a shuffled warmup stream drawn from the same
/// class means.
pub fn warmup_head(spec: &SyntheticSpec, warmup: &Warmup) -> Result<HeadSeed> {
    if warmup.classes < 2 || warmup.classes > spec.labels.len() {
        return Err(Error::Config(format!(
            "warmup classes must be in 2..={}, got {}",
            spec.labels.len(),
            warmup.classes
        )));
    }
    let sub = spec.subset(warmup.classes, warmup.samples_per_class, warmup.seed);
    let data = gen_synthetic(&sub)?;
    let zero = HeadSeed::zeros(spec.labels[..warmup.classes].to_vec(), spec.feature_len());
    let plan = build_stream(data.len(), warmup.seed, PseudoTest::Fraction(0.8))?;
    let cfg = StrategyConfig::new(StrategyKind::TinyOl, warmup.learning_rate, 1)?;
    let out = run_experiment(None, &zero, &data, &plan, cfg, &RunOptions::default())?;
    Ok(out.learner.eval_head())
}
