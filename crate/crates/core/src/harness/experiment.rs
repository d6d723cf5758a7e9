//! Prequential (test-then-train) stream runner.

use std::borrow::Cow;
use std::time::Instant;

use crate::classifier::DEFAULT_MAX_CLASSES;
use crate::error::{Error, Result};
use crate::frozen::{FrozenModel, HeadSeed};
use crate::harness::dataset::Dataset;
use crate::harness::report::{
    ClassAccuracy, ConfusionMatrix, MemoryAccounting, RunMetadata, RunReport, Timing, TimingAccumulator, REPORT_SCHEMA,
};
use crate::harness::stream::StreamPlan;
use crate::strategies::{OnlineLearner, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Stop training once the pseudo-test region starts.
    pub freeze_during_test: bool,
    pub max_classes: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            freeze_during_test: false,
            max_classes: DEFAULT_MAX_CLASSES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub learner: OnlineLearner,
}

/// Streams `dataset` in `plan` order through the frozen model (or straight
/// through, for precomputed features) and the OL head.
///
/// Samples at or past `plan.pseudo_test_start` are scored with the
/// strategy's evaluation prediction before they are trained on.
pub fn run_experiment(
    model: Option<&FrozenModel>,
    seed: &HeadSeed,
    dataset: &Dataset,
    plan: &StreamPlan,
    cfg: StrategyConfig,
    opts: &RunOptions,
) -> Result<RunOutput> {
    match (dataset.kind.is_raw(), model) {
        (true, None) => {
            return Err(Error::Config(format!(
                "dataset {} holds raw inputs and needs a frozen model",
                dataset.id
            )))
        }
        (false, Some(_)) => {
            return Err(Error::Config(format!(
                "dataset {} holds precomputed features; run it without a frozen model",
                dataset.id
            )))
        }
        _ => {}
    }
    if let Some(model) = model {
        if model.input_shape().len() != dataset.shape.len() {
            return Err(Error::shape(
                "model input",
                model.input_shape(),
                "dataset",
                dataset.shape,
            ));
        }
    }
    let feature_len = model.map_or(dataset.shape.len(), FrozenModel::feature_len);
    if seed.feature_len() != feature_len {
        return Err(Error::shape(
            "head",
            seed.weights.shape_str(),
            "features",
            format!("len {feature_len}"),
        ));
    }
    if plan.len() != dataset.len() {
        return Err(Error::Config(format!(
            "stream plan covers {} samples but the dataset has {}",
            plan.len(),
            dataset.len()
        )));
    }
    if plan.pseudo_test_start >= plan.len() {
        return Err(Error::Config("pseudo-test start lies outside the stream".into()));
    }

    let mut learner = OnlineLearner::from_seed(seed, cfg, opts.max_classes)?;
    let mut forward_time = TimingAccumulator::default();
    let mut step_time = TimingAccumulator::default();
    let mut peak_bytes = learner.memory_bytes();
    let mut scored: Vec<(usize, String)> = Vec::with_capacity(plan.scored());

    for (pos, &idx) in plan.order.iter().enumerate() {
        let sample = dataset
            .samples
            .get(idx)
            .ok_or_else(|| Error::Config(format!("stream index {idx} out of range")))?;
        let in_test = pos >= plan.pseudo_test_start;
        if in_test && opts.freeze_during_test && pos == plan.pseudo_test_start {
            learner.finish();
        }

        let features: Cow<'_, [f32]> = match model {
            Some(m) => {
                let t0 = Instant::now();
                let f = m.forward(&sample.input)?;
                forward_time.record(t0.elapsed());
                Cow::Owned(f)
            }
            None => Cow::Borrowed(&sample.input),
        };

        if in_test {
            let pred = learner.predict_for_eval(&features)?;
            scored.push((idx, pred.predicted_label));
        }
        if !(in_test && opts.freeze_during_test) {
            let t0 = Instant::now();
            learner.train_step(&features, &sample.label)?;
            step_time.record(t0.elapsed());
            peak_bytes = peak_bytes.max(learner.memory_bytes());
        }
    }
    if !opts.freeze_during_test {
        learner.finish();
    }

    let report = build_report(
        &learner,
        dataset,
        plan,
        &cfg,
        opts,
        seed.labels.len(),
        &scored,
        Timing {
            frozen_forward: forward_time.stats(),
            ol_step: step_time.stats(),
        },
        MemoryAccounting {
            peak_bytes,
            final_classes: learner.layer().n(),
            feature_len,
        },
    );
    report.validate()?;
    Ok(RunOutput { report, learner })
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    learner: &OnlineLearner,
    dataset: &Dataset,
    plan: &StreamPlan,
    cfg: &StrategyConfig,
    opts: &RunOptions,
    initial_classes: usize,
    scored: &[(usize, String)],
    timing: Timing,
    memory: MemoryAccounting,
) -> RunReport {
    // Labels the head never learned (possible with a frozen test region)
    // still need confusion rows.
    let mut labels: Vec<String> = learner.layer().labels().to_vec();
    for (idx, _) in scored {
        let truth = &dataset.samples[*idx].label;
        if !labels.contains(truth) {
            labels.push(truth.clone());
        }
    }
    let pos = |l: &str| labels.iter().position(|x| x == l).expect("label registered above");
    let n = labels.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (idx, predicted) in scored {
        counts[pos(&dataset.samples[*idx].label)][pos(predicted)] += 1;
    }
    let per_class: Vec<ClassAccuracy> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, label)| {
            let total: u64 = counts[i].iter().sum();
            (total > 0).then(|| ClassAccuracy {
                label: label.clone(),
                correct: counts[i][i],
                total,
                accuracy: counts[i][i] as f64 / total as f64,
            })
        })
        .collect();
    let confusion = ConfusionMatrix { labels, counts };
    let correct = confusion.trace();
    let total = scored.len() as u64;
    RunReport {
        schema_version: REPORT_SCHEMA.to_owned(),
        metadata: RunMetadata {
            strategy: cfg.kind,
            learning_rate: cfg.learning_rate,
            batch_size: cfg.batch_size,
            seed: plan.seed,
            dataset_id: dataset.id.clone(),
            dataset_len: dataset.len(),
            pseudo_test_start: plan.pseudo_test_start,
            freeze_during_test: opts.freeze_during_test,
            initial_classes,
            class_arrival_order: learner.layer().labels().to_vec(),
        },
        accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
        scored: total,
        correct,
        per_class,
        confusion,
        timing,
        memory,
    }
}
