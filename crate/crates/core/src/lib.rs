#![cfg_attr(not(feature = "std"), no_std)]
// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
mod kernel;
mod math;

pub mod cavi;
pub mod localisation;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod scenario;
pub mod track;

pub use error::{Error, Result};
