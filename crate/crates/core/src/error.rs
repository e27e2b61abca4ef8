use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("trace does not match model: {0}")]
    TraceMismatch(String),

    #[error("unsupported layer kind `{0}`")]
    UnsupportedLayer(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("non-finite relevance at layer `{layer}`")]
    NonFiniteRelevance { layer: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("single-class input")]
    SingleClass,

    #[error("empty scoring area around ({x}, {y}) with radius {radius}")]
    EmptyDisc { x: f64, y: f64, radius: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn shape(layer: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Shape {
            layer: layer.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
