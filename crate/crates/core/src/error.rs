use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("{axis} = {value} is not divisible by patch size {patch}")]
    NotDivisible {
        axis: &'static str,
        value: usize,
        patch: usize,
    },

    #[error("invalid instruction: {0}")]
    Instruction(String),

    #[error("unsupported reference combination: {0}")]
    UnsupportedCombination(String),

    #[error("no offset policy for task {task} with role {role}")]
    NoOffsetPolicy { task: String, role: String },

    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },

    #[error("invalid tensor file {path}: {message}")]
    Tomn { path: PathBuf, message: String },

    #[error("missing file {path}")]
    MissingFile { path: PathBuf },

    #[error("config: {0}")]
    Config(String),

    #[error("invalid plan: {0}")]
    Plan(String),

    #[error("non-finite loss at step {step} (task {task}, seed {seed})")]
    NonFiniteLoss { step: u64, task: String, seed: u64 },

    #[error("config digest mismatch: checkpoint has {found}, expected {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("data generation: {0}")]
    Datagen(String),

    #[error("metric: {0}")]
    Metric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
