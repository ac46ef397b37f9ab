use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed WAV file {path}: {reason}")]
    WavFormat { path: PathBuf, reason: String },
    #[error("unsupported WAV encoding in {path}: {reason}")]
    UnsupportedCodec { path: PathBuf, reason: String },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("manifest schema error at line {line}: {reason}")]
    ManifestSchema { line: usize, reason: String },
    #[error("duplicate clip path within split: {0}")]
    DuplicateEntry(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("filterbank construction failed: {0}")]
    FilterBank(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("batchnorm eval requested before any training step ({0})")]
    UninitializedStats(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    CheckpointVersion { found: u16, expected: u16 },
    #[error("corrupt file {path} at offset {offset}: {reason}")]
    Corruption { path: PathBuf, offset: u64, reason: String },
    #[error("training aborted: non-finite {quantity} at layer {layer}, step {step}")]
    NonFinite { quantity: String, layer: String, step: usize },
    #[error("missing embeddings for samples: {0:?}")]
    MissingEmbeddings(Vec<String>),
    #[error("missing prerequisite: {what} (run `{fix}` first)")]
    MissingPrerequisite { what: String, fix: String },
    #[error("audit error: {0}")]
    Audit(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
