//! Crate-wide error type with stable exit-code mapping for the CLI.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("quantization: {0}")]
    Quant(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("boundary register: {0}")]
    Boundary(String),

    #[error("SRAM capacity: {0}")]
    Sram(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("verification failed: {0}")]
    Verify(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for this error kind. Parse, shape and verification
    /// failures get distinct codes so scripts can tell them apart.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } => 2,
            Error::Shape(_) => 3,
            Error::Verify(_) => 4,
            _ => 1,
        }
    }
}
