//! Experiment harness for the variational tracker: configuration, file formats and runners.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use error::{HarnessError, Result};
