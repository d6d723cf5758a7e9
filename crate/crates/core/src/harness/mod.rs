//! Datasets, stream construction, prequential runs, reports, comparison.

pub mod compare;
pub mod dataset;
pub mod experiment;
pub mod report;
pub mod stream;
pub mod synthetic;

pub use compare::{compare, ComparisonTable};
pub use dataset::{load_feature_csv, load_mnist_idx, Dataset, InputKind, Sample};
pub use experiment::{run_experiment, RunOptions, RunOutput};
pub use report::RunReport;
pub use stream::{build_stream, PseudoTest, StreamPlan};
pub use synthetic::{gen_synthetic, warmup_head, SyntheticSpec, Warmup};
