//! Teacher-student acoustic scene classification toolkit: WAV ingestion,
//! three spectro-temporal front ends, a small trainable network engine,
//! distillation training, product-rule fusion, and complexity auditing.

pub mod audio;
pub mod audit;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod fusion;
pub mod model;
pub mod nn;
pub mod train;

pub use error::{Error, Result};
