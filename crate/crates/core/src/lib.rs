//! Audio representations for deep learning on music.
//!
//! The pipeline turns PCM audio into 204×204 real matrices using one of three
//! transforms (log-spaced filter bank, linear filter bank, random matrix
//! projection), assembles balanced labeled datasets from overlapping chunks, and
//! trains a six-layer convolutional network written from scratch.
//!
//! Modules follow the pipeline order:
//!
//! - [`audio`]: WAV decoding, channel averaging, anti-aliased downsampling.
//! - [`transform`]: filter banks, framing, the random matrix, spectrograms.
//! - [`dataset`]: chunk enumeration, per-class sampling, splits, file formats.
//! - [`nn`]: tensors, layers, the classification network, training.
//! - [`eval`]: accuracy, confusion matrices, CSV/PGM renderings.
//! - [`synth`]: synthetic multi-class corpora for end-to-end checks.

// `!(x > y)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audio;
pub mod dataset;
mod digest;
pub mod error;
pub mod eval;
pub mod nn;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
