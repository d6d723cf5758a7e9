//! Online learning on top of a frozen feature extractor.
//!
//! A pretrained network with its classification layer removed turns raw
//! samples into feature vectors. An expandable classification head
//! ([`classifier::OlLayer`]) is trained one sample at a time by one of seven
//! update rules ([`strategies`]), growing a row whenever a new label shows
//! up. [`harness`] streams datasets through the system with prequential
//! pseudo-test scoring and produces comparable reports.

pub mod checkpoint;
pub mod classifier;
pub mod config;
pub mod error;
pub mod format;
pub mod frozen;
pub mod harness;
pub mod math;
pub mod strategies;

pub use classifier::{OlLayer, Prediction};
pub use error::{Error, Result};
pub use frozen::{FrozenModel, HeadSeed, Layer, Shape};
pub use strategies::{OnlineLearner, StrategyConfig, StrategyKind};
