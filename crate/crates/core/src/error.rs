//! Error type shared across the crate.
//!
//! Variants are kept distinct where callers are expected to branch on them
//! (checkpoint loading in particular must distinguish "not a checkpoint"
//! from "right format, wrong version" from "right version, wrong shapes").

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor operation called with incompatible shapes.
    #[error("{op}: {detail}")]
    Shape { op: &'static str, detail: String },

    /// `backward` called on a tensor that is not a scalar.
    #[error("backward requires a scalar (1-element) tensor, got {numel} elements")]
    NonScalarBackward { numel: usize },

    /// A class label lies outside `[0, num_classes)`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// Optimizer stepped over a parameter that never received a gradient.
    #[error("parameter {name:?} has no gradient; run backward before stepping")]
    MissingGrad { name: String },

    /// Model configuration failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Font file could not be loaded or parsed.
    #[error("font {path:?}: {detail}")]
    FontLoad { path: String, detail: String },

    /// Synthetic glyph component index outside the generated component set.
    #[error("synthetic component {component} out of range (component count {count})")]
    ComponentOutOfRange { component: u32, count: u32 },

    /// Input text line could not be parsed as `label<TAB>text`.
    #[error("line {line}: {detail}")]
    Parse { line: usize, detail: String },

    /// Operation needs a non-empty dataset.
    #[error("{0}")]
    EmptyDataset(String),

    /// File is not a checkpoint produced by this crate.
    #[error("not a checkpoint file (bad magic)")]
    NotACheckpoint,

    /// Checkpoint format version is not the one this build writes.
    #[error("checkpoint version {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Checkpoint tensor shapes disagree with the stored model config.
    #[error("checkpoint tensor {name:?}: {detail}")]
    CheckpointShape { name: String, detail: String },

    /// Checkpoint file ended before the declared payload.
    #[error("checkpoint truncated: {0}")]
    CheckpointTruncated(String),

    /// Training loss became NaN or infinite.
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },

    /// Embedding analysis query codepoint is not in the matrix.
    #[error("codepoint U+{0:04X} not present in embedding matrix")]
    QueryNotFound(u32),

    /// Requested more neighbors than the matrix holds.
    #[error("k={k} but the matrix has only {rows} rows (query excluded: {available} candidates)")]
    BadNeighborCount { k: usize, rows: usize, available: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
