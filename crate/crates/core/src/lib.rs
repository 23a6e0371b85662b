//! Variance-free tuning of sparse linear regression: Lasso-family solvers,
//! the LinSelect criterion, baseline selectors, changepoint segmentation
//! and a seeded simulation harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod estimators;
pub mod model;
pub mod linselect;
pub mod penalty;
pub mod report;
pub mod segmentation;
pub mod selectors;
pub mod sim;
pub mod subsets;

pub use error::{Error, Result};
pub use estimators::{EstimatorPath, FitResult, GroupStructure};
pub use model::{Dataset, Projector, Support};
