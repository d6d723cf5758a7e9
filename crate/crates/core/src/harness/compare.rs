//! Side-by-side comparison of run reports: one column per strategy, one row
//! per metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::report::RunReport;
use crate::strategies::StrategyKind;

pub const METRIC_ROWS: [&str; 3] = [
    "Accuracy (%)",
    "Training step time (ms)",
    "Max allocated OL memory (kB)",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonColumn {
    pub header: String,
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Values in `METRIC_ROWS` order.
    pub values: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClassRow {
    pub strategy: String,
    pub seed: u64,
    pub label: String,
    pub correct: u64,
    pub total: u64,
    pub accuracy_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: String,
    pub dataset_id: String,
    pub rows: Vec<String>,
    pub columns: Vec<ComparisonColumn>,
    pub per_class: Vec<PerClassRow>,
}

fn position(kind: StrategyKind) -> usize {
    StrategyKind::ALL.iter().position(|k| *k == kind).unwrap_or(usize::MAX)
}

/// Builds the table. Reports must share a schema version and a dataset id.
/// Columns follow the canonical strategy order; reports of the same
/// strategy keep their input order and get the seed in their header.
pub fn compare(reports: &[RunReport]) -> Result<ComparisonTable> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Report("nothing to compare".into()))?;
    for r in reports {
        if r.schema_version != first.schema_version {
            return Err(Error::Report(format!(
                "mixed report schemas: {:?} and {:?}",
                first.schema_version, r.schema_version
            )));
        }
        if r.metadata.dataset_id != first.metadata.dataset_id {
            return Err(Error::Report(format!(
                "reports come from different datasets: {:?} and {:?}",
                first.metadata.dataset_id, r.metadata.dataset_id
            )));
        }
        r.validate()?;
    }
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by_key(|r| position(r.metadata.strategy));

    let repeated = |kind: StrategyKind| sorted.iter().filter(|r| r.metadata.strategy == kind).count() > 1;
    let header = |r: &RunReport| {
        let name = r.metadata.strategy.display_name();
        if repeated(r.metadata.strategy) {
            format!("{name} (seed {})", r.metadata.seed)
        } else {
            name.to_owned()
        }
    };

    let columns = sorted
        .iter()
        .map(|r| ComparisonColumn {
            header: header(r),
            strategy: r.metadata.strategy,
            seed: r.metadata.seed,
            values: [
                r.accuracy * 100.0,
                r.timing.ol_step.mean_ms,
                r.memory.peak_bytes as f64 / 1000.0,
            ],
        })
        .collect();
    let per_class = sorted
        .iter()
        .flat_map(|r| {
            let strategy = header(r);
            r.per_class.iter().map(move |c| PerClassRow {
                strategy: strategy.clone(),
                seed: r.metadata.seed,
                label: c.label.clone(),
                correct: c.correct,
                total: c.total,
                accuracy_pct: c.accuracy * 100.0,
            })
        })
        .collect();

    Ok(ComparisonTable {
        schema_version: first.schema_version.clone(),
        dataset_id: first.metadata.dataset_id.clone(),
        rows: METRIC_ROWS.iter().map(|s| s.to_string()).collect(),
        columns,
        per_class,
    })
}

impl ComparisonTable {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.columns.len())
    }

    pub fn value(&self, row: usize, column: usize) -> f64 {
        self.columns[column].values[row]
    }

    fn cell(row: usize, v: f64) -> String {
        match row {
            1 => format!("{v:.4}"),
            _ => format!("{v:.2}"),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_owned()];
        header.extend(self.columns.iter().map(|c| c.header.clone()));
        w.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![row.clone()];
            rec.extend(self.columns.iter().map(|c| Self::cell(i, c.values[i])));
            w.write_record(&rec).map_err(csv_err)?;
        }
        finish_csv(w)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| Dataset: {} |", self.dataset_id);
        for c in &self.columns {
            out.push_str(&format!(" {} |", c.header));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(self.columns.len()));
        out.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("| {row} |"));
            for c in &self.columns {
                out.push_str(&format!(" {} |", Self::cell(i, c.values[i])));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Report(e.to_string()))
    }

    /// Long-format per-class accuracy, one line per (strategy, class).
    pub fn per_class_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.per_class {
            w.serialize(row).map_err(csv_err)?;
        }
        if self.per_class.is_empty() {
            w.write_record(["strategy", "seed", "label", "correct", "total", "accuracy_pct"])
                .map_err(csv_err)?;
        }
        finish_csv(w)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Report(e.to_string())
}

fn finish_csv(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Report(e.to_string()))
}
