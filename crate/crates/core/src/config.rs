//! TOML experiment configs and their resolution into runnable experiments.
//!
//! ```toml
//! seed = 7
//! pseudo_test = 0.8            # fraction, or an explicit index such as 4000
//! freeze_during_test = false
//! class_cap = 64
//!
//! [dataset]
//! kind = "synthetic"           # synthetic | features_csv | raw_csv | mnist
//! classes = 8
//! feature_len = 128
//! samples_per_class = 500
//! spread = 2.5
//!
//! [head]
//! warmup_classes = 5
//!
//! [strategy]
//! kind = "cwr"
//! alpha = 0.02                 # optional, per-strategy default
//! batch = 16
//!
//! [output]
//! report = "cwr.json"
//! ```
//!
//! Relative paths resolve against the config file's directory, then against
//! `$OLBENCH_DATA_DIR`.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::load_model;
use crate::frozen::{FrozenModel, HeadSeed, Shape};
use crate::harness::dataset::{load_csv_as, load_mnist_idx, Dataset, InputKind};
use crate::harness::experiment::RunOptions;
use crate::harness::stream::{build_stream, PseudoTest, StreamPlan};
use crate::harness::synthetic::{gen_synthetic, warmup_head, SyntheticSpec, Warmup};
use crate::strategies::{StrategyConfig, StrategyKind};

pub const DATA_DIR_ENV: &str = "OLBENCH_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_pseudo_test")]
    pub pseudo_test: PseudoTest,
    #[serde(default)]
    pub freeze_during_test: bool,
    #[serde(default = "default_class_cap")]
    pub class_cap: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub head: Option<HeadConfig>,
    #[serde(default)]
    pub strategy: StrategySection,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_pseudo_test() -> PseudoTest {
    PseudoTest::Fraction(0.8)
}

fn default_class_cap() -> usize {
    crate::classifier::DEFAULT_MAX_CLASSES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    Synthetic {
        classes: usize,
        feature_len: usize,
        samples_per_class: usize,
        #[serde(default = "one")]
        separation: f32,
        #[serde(default = "one")]
        spread: f32,
        /// Seeds the class means. Defaults to the experiment seed.
        #[serde(default)]
        mean_seed: Option<u64>,
        /// Seeds the sample noise. Defaults to the experiment seed + 1.
        #[serde(default)]
        data_seed: Option<u64>,
    },
    FeaturesCsv {
        path: PathBuf,
    },
    RawCsv {
        path: PathBuf,
        /// `[height, width, channels]` when rows are flattened images.
        #[serde(default)]
        image: Option<[usize; 3]>,
    },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        /// Digits to keep; all ten when absent.
        #[serde(default)]
        keep: Option<Vec<String>>,
    },
}

fn one() -> f32 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub path: PathBuf,
}

/// Where the initial head comes from when the model file does not supply
/// it: a warmup run on synthetic data, or a zero head over fixed labels.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadConfig {
    pub warmup_classes: Option<usize>,
    #[serde(default = "default_warmup_samples")]
    pub warmup_samples_per_class: usize,
    #[serde(default = "default_warmup_alpha")]
    pub warmup_alpha: f32,
    pub labels: Option<Vec<String>>,
}

fn default_warmup_samples() -> usize {
    200
}

fn default_warmup_alpha() -> f32 {
    0.005
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategySection {
    #[serde(default = "default_kind")]
    pub kind: StrategyKind,
    /// Falls back to [`StrategyKind::default_learning_rate`].
    #[serde(default)]
    pub alpha: Option<f32>,
    #[serde(default = "default_batch")]
    pub batch: usize,
}

fn default_kind() -> StrategyKind {
    StrategyKind::TinyOl
}

fn default_batch() -> usize {
    16
}

impl Default for StrategySection {
    fn default() -> Self {
        Self {
            kind: default_kind(),
            alpha: None,
            batch: default_batch(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub report: Option<PathBuf>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub strategy: Option<StrategyKind>,
    pub alpha: Option<f32>,
    pub batch: Option<usize>,
    pub seed: Option<u64>,
    pub pseudo_test: Option<PseudoTest>,
    pub freeze_during_test: bool,
    pub report: Option<PathBuf>,
}

/// Everything needed for one `run_experiment` call.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Option<FrozenModel>,
    pub head: HeadSeed,
    pub dataset: Dataset,
    pub plan: StreamPlan,
    pub strategy: StrategyConfig,
    pub options: RunOptions,
    pub report_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.strategy {
            self.strategy.kind = k;
        }
        if let Some(a) = o.alpha {
            self.strategy.alpha = Some(a);
        }
        if let Some(b) = o.batch {
            self.strategy.batch = b;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(p) = o.pseudo_test {
            self.pseudo_test = p;
        }
        self.freeze_during_test |= o.freeze_during_test;
        if let Some(r) = &o.report {
            self.output.report = Some(r.clone());
        }
    }

    pub fn strategy_config(&self) -> Result<StrategyConfig> {
        let alpha = self
            .strategy
            .alpha
            .unwrap_or_else(|| self.strategy.kind.default_learning_rate());
        StrategyConfig::new(self.strategy.kind, alpha, self.strategy.batch)
    }

    /// Loads data and model files and builds the stream. `base` is the
    /// directory relative paths are resolved against.
    pub fn prepare(&self, base: &Path) -> Result<Experiment> {
        let strategy = self.strategy_config()?;
        let resolve = |p: &Path| resolve_path(base, p);

        let loaded = match &self.model {
            Some(m) => Some(load_model(resolve(&m.path))?),
            None => None,
        };
        let (dataset, synthetic) = self.load_dataset(&resolve)?;
        if dataset.is_empty() {
            return Err(Error::Config(format!("dataset {} has no samples", dataset.id)));
        }

        let head = match (&self.head, &loaded, &synthetic) {
            (
                Some(HeadConfig {
                    warmup_classes: Some(classes),
                    warmup_samples_per_class,
                    warmup_alpha,
                    ..
                }),
                _,
                Some(spec),
            ) => warmup_head(
                spec,
                &Warmup {
                    classes: *classes,
                    samples_per_class: *warmup_samples_per_class,
                    learning_rate: *warmup_alpha,
                    seed: self.seed.wrapping_add(2),
                },
            )?,
            (
                Some(HeadConfig {
                    warmup_classes: Some(_),
                    ..
                }),
                _,
                None,
            ) => return Err(Error::Config("head warmup needs a synthetic dataset".into())),
            (
                Some(HeadConfig {
                    labels: Some(labels), ..
                }),
                _,
                _,
            ) => {
                let m = match &loaded {
                    Some((model, _)) if dataset.kind.is_raw() => model.feature_len(),
                    _ => dataset.shape.len(),
                };
                HeadSeed::zeros(labels.clone(), m)
            }
            (_, Some((_, head)), _) => head.clone(),
            _ => {
                return Err(Error::Config(
                    "no initial head: give a [model] file, [head] warmup_classes, or [head] labels".into(),
                ))
            }
        };
        head.validate()?;

        // Precomputed features skip the extractor even when a model file
        // supplied the head.
        let model = loaded.map(|(m, _)| m).filter(|_| dataset.kind.is_raw());
        let plan = build_stream(dataset.len(), self.seed, self.pseudo_test)?;
        Ok(Experiment {
            model,
            head,
            dataset,
            plan,
            strategy,
            options: RunOptions {
                freeze_during_test: self.freeze_during_test,
                max_classes: self.class_cap,
            },
            report_path: self.output.report.clone(),
        })
    }

    fn load_dataset(&self, resolve: &dyn Fn(&Path) -> PathBuf) -> Result<(Dataset, Option<SyntheticSpec>)> {
        Ok(match &self.dataset {
            DatasetConfig::Synthetic {
                classes,
                feature_len,
                samples_per_class,
                separation,
                spread,
                mean_seed,
                data_seed,
            } => {
                let spec = SyntheticSpec::with_random_means(
                    SyntheticSpec::default_labels(*classes),
                    *feature_len,
                    *separation,
                    *spread,
                    *samples_per_class,
                    mean_seed.unwrap_or(self.seed),
                    data_seed.unwrap_or(self.seed.wrapping_add(1)),
                );
                (gen_synthetic(&spec)?, Some(spec))
            }
            DatasetConfig::FeaturesCsv { path } => (load_csv_as(resolve(path), InputKind::PrecomputedFeatures)?, None),
            DatasetConfig::RawCsv { path, image } => {
                let mut ds = load_csv_as(resolve(path), InputKind::FlatVector)?;
                if let Some([height, width, channels]) = *image {
                    let shape = Shape::Image {
                        height,
                        width,
                        channels,
                    };
                    if shape.len() != ds.shape.len() {
                        return Err(Error::shape("image", shape, "csv rows", ds.shape));
                    }
                    ds.shape = shape;
                    ds.kind = InputKind::ImagePlane;
                }
                (ds, None)
            }
            DatasetConfig::Mnist { images, labels, keep } => {
                let keep: BTreeSet<String> = match keep {
                    Some(k) => k.iter().cloned().collect(),
                    None => (0..10).map(|d| d.to_string()).collect(),
                };
                (load_mnist_idx(resolve(images), resolve(labels), &keep)?, None)
            }
        })
    }
}

/// Absolute paths pass through. Relative ones are tried against `base`,
/// then against `$OLBENCH_DATA_DIR`; the `base` candidate is returned when
/// neither exists so errors name the expected location.
pub fn resolve_path(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    let local = base.join(path);
    if local.exists() {
        return local;
    }
    if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
        let candidate = Path::new(&root).join(path);
        if candidate.exists() {
            return candidate;
        }
    }
    local
}

/// Reads a config file and applies overrides. Returns the config and the
/// directory its relative paths resolve against.
pub fn load_config(path: impl AsRef<Path>, overrides: &Overrides) -> Result<(ExperimentConfig, PathBuf)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.apply(overrides);
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYNTH: &str = r#"
seed = 3
pseudo_test = 0.75

[dataset]
kind = "synthetic"
classes = 4
feature_len = 8
samples_per_class = 20
spread = 0.5

[head]
warmup_classes = 2
warmup_samples_per_class = 30

[strategy]
kind = "lwf"
alpha = 0.01
batch = 4
"#;

    #[test]
    fn parses_with_defaults() {
        let cfg = ExperimentConfig::parse(SYNTH).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.pseudo_test, PseudoTest::Fraction(0.75));
        assert_eq!(cfg.class_cap, 64);
        assert!(!cfg.freeze_during_test);
        assert_eq!(cfg.strategy.kind, StrategyKind::Lwf);
        let exp = cfg.prepare(Path::new(".")).unwrap();
        assert_eq!(exp.dataset.len(), 80);
        assert_eq!(exp.plan.pseudo_test_start, 60);
        assert_eq!(exp.head.labels, vec!["c0", "c1"]);
        assert!(exp.model.is_none());
    }

    #[test]
    fn explicit_index_boundary() {
        let text = SYNTH.replace("pseudo_test = 0.75", "pseudo_test = 50");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg.pseudo_test, PseudoTest::Index(50));
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = ExperimentConfig::parse(SYNTH).unwrap();
        cfg.apply(&Overrides {
            strategy: Some(StrategyKind::Cwr),
            alpha: Some(0.05),
            batch: Some(16),
            freeze_during_test: true,
            ..Overrides::default()
        });
        let s = cfg.strategy_config().unwrap();
        assert_eq!((s.kind, s.learning_rate, s.batch_size), (StrategyKind::Cwr, 0.05, 16));
        assert!(cfg.freeze_during_test);
        assert_eq!(cfg.seed, 3);
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::parse(&format!("{SYNTH}\nbogus = 1\n")).is_err());
        let text = SYNTH.replace("kind = \"lwf\"", "kind = \"sgd\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn missing_head_source_is_an_error() {
        let text = SYNTH.replace("warmup_classes = 2", "");
        let err = ExperimentConfig::parse(&text)
            .unwrap()
            .prepare(Path::new("."))
            .unwrap_err();
        assert!(err.to_string().contains("no initial head"), "{err}");
    }

    #[test]
    fn data_dir_fallback() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("here.csv"), "x").unwrap();
        let base = Path::new("/nonexistent-base");
        // Only this test touches the variable.
        std::env::set_var(DATA_DIR_ENV, dir.path());
        assert_eq!(resolve_path(base, Path::new("here.csv")), dir.path().join("here.csv"));
        assert_eq!(resolve_path(base, Path::new("gone.csv")), base.join("gone.csv"));
        std::env::remove_var(DATA_DIR_ENV);
    }
}
