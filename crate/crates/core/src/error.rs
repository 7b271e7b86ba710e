use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("label {label} is not in catalog `{catalog}`")]
    UnknownLabel { label: u16, catalog: String },

    #[error("catalog error: {0}")]
    Catalog(String),

    #[error("{rate} is undefined: zero denominator")]
    UndefinedRate { rate: &'static str },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid spec: {0}")]
    Spec(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid volume file: {0}")]
    Format(String),

    #[error("model has not been fitted")]
    Unfitted,

    #[error("judge protocol error: {0}")]
    Protocol(String),

    #[error("oracle could not review entry: {0}")]
    Oracle(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
