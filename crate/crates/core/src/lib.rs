//! Label-efficient chest X-ray classification with a vision-language
//! encoder.
//!
//! The crate covers the full pipeline: manifest ingestion and
//! patient-grouped splits, partial fine-tuning of the visual encoder, prompt
//! based zero-shot scoring, balanced few-shot head training and multi-label
//! ROC-AUC evaluation. A deterministic stub encoder and a synthetic image
//! fixture let every stage run without the real dataset or weights.
//!
//! Each capability has a runnable example under `examples/`.

// Validation uses `!(x > 0.0)` so that NaN is rejected along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod labels;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod train;

pub use error::{Error, Result};
pub use labels::{DiseaseLabel, LabelVector, NUM_CLASSES};
