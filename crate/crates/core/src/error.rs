use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {actual}")]
    Shape {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective out of bounds: {0}")]
    Objective(String),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },

    #[error("truncated data: needed {needed} bytes, found {available}")]
    Truncated { needed: usize, available: usize },

    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),

    #[error("model/spec inconsistency: {0}")]
    SpecInconsistency(String),

    #[error("model expects {model} actions but environment has {env}")]
    ActionCountMismatch { model: usize, env: usize },

    #[error("observation history is empty")]
    EmptyHistory,

    #[error("missing stream file {}", .0.display())]
    MissingStream(PathBuf),

    #[error("stream {stream} holds {actual} records, manifest declares {expected}")]
    StreamLength {
        stream: String,
        expected: usize,
        actual: usize,
    },

    #[error("present-frame filter magnitude is zero")]
    DegenerateFilter,

    #[error("sigma schedule must start at 0 and be strictly ascending")]
    UnsortedSigmas,

    #[error("class {class} has {available} frames, {needed} required")]
    InsufficientData {
        class: String,
        needed: usize,
        available: usize,
    },

    #[error("class sets differ between confusion matrices")]
    ClassSetMismatch,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("{n} points is too few for perplexity {perplexity} (need more than {})", 3.0 * .perplexity)]
    TooFewPoints { n: usize, perplexity: f64 },

    #[error("invalid layer: {0}")]
    InvalidLayer(String),

    #[error("rollout has no activation trace")]
    MissingTrace,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn shape(op: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> Self {
        Error::Shape {
            op,
            expected: expected.into(),
            actual: actual.into(),
        }
    }
}
