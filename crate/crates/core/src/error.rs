use std::io;

/// Errors produced anywhere in the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("unknown primitive `{0}`")]
    UnknownPrimitive(String),

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("backward root must be a scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),

    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("AST file line {line}: {message}")]
    AstFormat { line: usize, message: String },

    #[error("CoNLL-U line {line}: {message}")]
    Conllu { line: usize, message: String },

    #[error("corpus line {line}: {message}")]
    Corpus { line: usize, message: String },

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("token sequence is empty")]
    EmptySequence,

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("index: {0}")]
    Index(String),

    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    /// True for failures of the numeric machinery (NaN/Inf, divergence)
    /// rather than bad input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Diverged { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
