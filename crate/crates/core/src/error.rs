use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("feature undefined: {0}")]
    UndefinedFeature(String),

    #[error("vocabulary overflow: {component} value {value} does not fit alphabet of size {size}")]
    VocabularyOverflow {
        component: &'static str,
        value: usize,
        size: usize,
    },

    #[error("generation produced no usable 5-tuples")]
    EmptyGeneration,

    #[error("generation budget exhausted: {0}")]
    GenerationBudget(String),

    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("empty manifest")]
    EmptyManifest,

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error("corrupt checkpoint: {0}")]
    Integrity(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }
}
