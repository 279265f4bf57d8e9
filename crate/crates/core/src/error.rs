use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("degenerate test set: {0}")]
    DegenerateTest(String),

    #[error("non-finite loss at iteration {iteration} (lr = {lr:e}, |grad| = {grad_norm:e})")]
    NonFiniteLoss {
        iteration: usize,
        lr: f64,
        grad_norm: f64,
    },

    #[error("target density {target} is not bracketed: achieved range [{lo}, {hi}]")]
    NoBracket { target: f64, lo: f64, hi: f64 },

    #[error("ingestion error in {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for command-line front ends.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInput(_)
            | Error::InvalidSpec(_)
            | Error::InvalidConfig(_)
            | Error::NoBracket { .. } => 2,
            Error::Ingest { .. }
            | Error::MissingData(_)
            | Error::DegenerateTest(_)
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::DegenerateFit(_) | Error::NonFiniteLoss { .. } => 4,
        }
    }
}
