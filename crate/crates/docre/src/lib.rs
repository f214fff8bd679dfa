//! Document-level relation extraction with sentence importance estimation
//! and a sentence focusing loss.
//!
//! The library is organized around a small differentiable multi-label
//! classifier ([`model`]) scored over [`corpus::DocumentView`]s, so the same
//! weights evaluate a full document and the document with sentences removed.
//! The [`sief`] module turns the probability deltas into per-sentence
//! importance scores and consistency losses; [`train`] runs the optimization
//! loop and [`eval`] holds the metric and diagnostic harness.

pub mod config;
pub mod corpus;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod seeds;
pub mod sief;
pub mod train;

#[cfg(test)]
pub(crate) mod testutil;

/// Probability clamp shared by the model outputs and every log-taking loss.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error in {path} (document {index}): {msg}")]
    Parse {
        path: String,
        index: usize,
        msg: String,
    },
    #[error("validation error in document {doc_id}: {msg}")]
    Validation { doc_id: String, msg: String },
    #[error("config error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("stale trace: model parameters changed since the forward pass")]
    StaleTrace,
    #[error(
        "non-evidence set of size {size} exceeds the exact-loss guard ({max}); \
         use the linearized or monte_carlo variant"
    )]
    SubsetGuard { size: usize, max: usize },
    #[error("non-finite loss encountered: {0}")]
    NonFinite(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
