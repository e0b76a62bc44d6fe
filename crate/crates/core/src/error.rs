use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {0}")]
    BadParams(String),

    #[error("invalid measurement model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("unknown phantom `{0}`")]
    UnknownPhantom(String),

    #[error("iterate became non-finite after {iteration} conjugate gradient steps")]
    NonFiniteIterate { iteration: usize },

    #[error("solver diverged at outer iteration {outer}: cost grew from {previous:.6e} to {current:.6e}")]
    Diverged {
        outer: usize,
        previous: f64,
        current: f64,
    },

    #[error("reference image has zero norm")]
    DegenerateReference,

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    /// True for failures caused by reading or writing files.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Image(_) | Error::Csv(_) | Error::Format(_)
        )
    }
}
