//! End-to-end affect recognition from raw narrow-band speech.
//!
//! A stack of 1-D convolutions reads the 8 kHz waveform (plus its squared
//! amplitude), every layer is globally average pooled, the pooled vectors are
//! fused by a learned weighted sum, and a fully connected layer feeds a
//! softmax (four emotions) or sigmoid (Big Five traits) head. The crate also
//! covers the spectrogram baseline, multilingual training with post-pooling
//! fine-tuning, evaluation metrics, model introspection, and a synthetic
//! corpus generator.

pub mod analysis;
pub mod audio;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod labels;
pub mod model;
pub mod numerics;
pub mod synthcorpus;
pub mod training;

pub use error::{Error, Result};
