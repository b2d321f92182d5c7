//! Metrics, cross-validation folds, synthetic phantoms and the benchmark runner.

pub mod metrics;
mod folds;
pub mod bench;
pub mod phantom;

pub use folds::{make_folds, FoldSplit, RunRoles};
