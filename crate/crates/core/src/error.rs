use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// A spatial size or buffer length does not fit the requested operation.
    #[error("size error: {0}")]
    Size(String),

    /// Feature-map or batch dimensions of two operands disagree.
    #[error("shape error: {0}")]
    Shape(String),

    #[error("FFT size {0} is not a power of two")]
    NotPowerOfTwo(usize),

    #[error("workspace too small: layer needs {needed} complex values, workspace holds {available}")]
    Capacity { needed: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),
}
