//! Run reports and their consistency checks.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::StrategyKind;

pub const REPORT_SCHEMA: &str = "olbench-report/1";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: u64,
    pub mean_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
}

/// Running min/mean/max over wall-clock samples.
#[derive(Debug, Clone, Default)]
pub struct TimingAccumulator {
    count: u64,
    total_ns: u128,
    min_ns: u128,
    max_ns: u128,
}

impl TimingAccumulator {
    pub fn record(&mut self, elapsed: std::time::Duration) {
        let ns = elapsed.as_nanos();
        if self.count == 0 {
            self.min_ns = ns;
            self.max_ns = ns;
        } else {
            self.min_ns = self.min_ns.min(ns);
            self.max_ns = self.max_ns.max(ns);
        }
        self.count += 1;
        self.total_ns += ns;
    }

    pub fn stats(&self) -> TimingStats {
        if self.count == 0 {
            return TimingStats::default();
        }
        let ms = |ns: u128| ns as f64 / 1e6;
        TimingStats {
            count: self.count,
            mean_ms: ms(self.total_ns) / self.count as f64,
            min_ms: ms(self.min_ns),
            max_ms: ms(self.max_ns),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub frozen_forward: TimingStats,
    pub ol_step: TimingStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub strategy: StrategyKind,
    pub learning_rate: f32,
    pub batch_size: usize,
    pub seed: u64,
    pub dataset_id: String,
    pub dataset_len: usize,
    pub pseudo_test_start: usize,
    pub freeze_during_test: bool,
    pub initial_classes: usize,
    /// Head labels in row order: seed labels, then labels in discovery order.
    pub class_arrival_order: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub label: String,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

/// Rows are true labels, columns predicted labels, both over `labels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryAccounting {
    pub peak_bytes: usize,
    pub final_classes: usize,
    pub feature_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: String,
    pub metadata: RunMetadata,
    /// Fraction of pseudo-test samples predicted correctly.
    pub accuracy: f64,
    pub scored: u64,
    pub correct: u64,
    pub per_class: Vec<ClassAccuracy>,
    pub confusion: ConfusionMatrix,
    pub timing: Timing,
    pub memory: MemoryAccounting,
}

impl RunReport {
    /// Checks the internal accounting: confusion rows match per-class
    /// totals and accuracy equals trace over total.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Report(msg));
        if self.schema_version != REPORT_SCHEMA {
            return bad(format!("schema {:?}, expected {REPORT_SCHEMA:?}", self.schema_version));
        }
        let n = self.confusion.labels.len();
        if self.confusion.counts.len() != n || self.confusion.counts.iter().any(|r| r.len() != n) {
            return bad("confusion matrix is not square over its labels".into());
        }
        if self.confusion.total() != self.scored {
            return bad(format!(
                "confusion total {} != scored {}",
                self.confusion.total(),
                self.scored
            ));
        }
        if self.confusion.trace() != self.correct {
            return bad(format!(
                "confusion trace {} != correct {}",
                self.confusion.trace(),
                self.correct
            ));
        }
        let expected_scored = (self.metadata.dataset_len - self.metadata.pseudo_test_start) as u64;
        if self.scored != expected_scored {
            return bad(format!("scored {} samples, expected {expected_scored}", self.scored));
        }
        if self.scored > 0 && self.accuracy != self.correct as f64 / self.scored as f64 {
            return bad("accuracy differs from correct / scored".into());
        }
        for c in &self.per_class {
            let Some(i) = self.confusion.labels.iter().position(|l| *l == c.label) else {
                return bad(format!("per-class label {:?} missing from confusion", c.label));
            };
            let row: u64 = self.confusion.counts[i].iter().sum();
            if row != c.total || self.confusion.counts[i][i] != c.correct {
                return bad(format!(
                    "per-class counts for {:?} disagree with confusion row",
                    c.label
                ));
            }
        }
        let listed: u64 = self.per_class.iter().map(|c| c.total).sum();
        if listed != self.scored {
            return bad("per-class totals do not cover every scored sample".into());
        }
        Ok(())
    }

    /// Copy with every wall-clock field zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    pub fn class_accuracy(&self, label: &str) -> Option<f64> {
        self.per_class.iter().find(|c| c.label == label).map(|c| c.accuracy)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Report(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))
    }

    /// Validates, then writes through a temporary file so a failed run never
    /// leaves a partial report behind.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        write_atomic(path.as_ref(), self.to_json()?.as_bytes())
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
