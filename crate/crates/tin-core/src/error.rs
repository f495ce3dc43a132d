//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller violated a documented precondition (shape mismatch, bad index,
    /// invalid configuration value, non-one-hot labels, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A file or byte stream does not match its documented format.
    #[error("format error: {0}")]
    Format(String),

    /// A numeric computation left the finite range or failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Shorthand for `Error::Contract` with formatting.
#[macro_export]
macro_rules! contract_err {
    ($($arg:tt)*) => {
        $crate::error::Error::Contract(format!($($arg)*))
    };
}
