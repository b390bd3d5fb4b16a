//! Training-free time series forecasting with reasoning language models.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod diagnostics;
pub mod engine;
pub mod eval;
pub mod experiment;
pub mod parser;
pub mod prompt;
pub mod provider;
pub mod stats;
pub mod synth;
