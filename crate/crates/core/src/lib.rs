//! Fairness-aware multitask training for tabular binary classification.
//!
//! The crate trains one output head per demographic subgroup on top of a
//! shared embedding + MLP trunk, and balances the per-subgroup training
//! speeds with a dynamic task-weighting optimizer (FERI) that is compared
//! against plain loss averaging. Everything runs on a small reverse-mode
//! autodiff tape in double precision.

pub mod array;
pub mod autodiff;
pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod opt;
pub mod parallel;

pub use array::Array2D;
pub use error::{Error, Result};
