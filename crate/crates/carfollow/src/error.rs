//! Error type shared across the crate.
//!
//! Variants map onto process exit codes: usage/config problems exit 2,
//! malformed or inconsistent input data exits 3, numerical failures exit 4.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad or missing configuration (config file keys, CLI usage).
    #[error("config error: {0}")]
    Config(String),
    /// An argument violates an operation's preconditions.
    #[error("argument error: {0}")]
    Argument(String),
    /// An input file does not match the expected format.
    #[error("format error: {0}")]
    Format(String),
    /// Input data violates a domain invariant.
    #[error("data error: {0}")]
    Data(String),
    /// A numerical routine failed (e.g. Cholesky after max jitter).
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Argument(_) => 2,
            Error::Format(_) | Error::Data(_) | Error::Io(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(Error::Config("x".into()).exit_code(), 2);
        assert_eq!(Error::Argument("x".into()).exit_code(), 2);
        assert_eq!(Error::Format("x".into()).exit_code(), 3);
        assert_eq!(Error::Data("x".into()).exit_code(), 3);
        assert_eq!(Error::Numerical("x".into()).exit_code(), 4);
    }
}
