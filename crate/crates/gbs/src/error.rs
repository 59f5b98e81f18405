//! Library-wide error type.

use thiserror::Error;

/// Errors reported by samplers, flows and estimators.
#[derive(Error, Debug)]
pub enum Error {
    /// An argument violated a precondition (wrong dimension, empty input, bad range).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input length or dimension does not match what the operation expects.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// Evaluation requested outside the support of the target.
    #[error("point outside the prior box: coordinate {index} = {value}")]
    OutsideSupport { index: usize, value: f64 },

    /// A gradient came back non-finite at a point inside the support.
    #[error("non-finite gradient at {point:?}")]
    NonFiniteGradient { point: Vec<f64> },

    /// The sampler produced too many divergent transitions to trust the run.
    #[error("sampler diagnostic failure: {0}")]
    SamplerDiagnostic(String),

    /// Sample set unusable for fitting (degenerate spread, too few points).
    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    /// A root solve or estimator could not produce a finite answer.
    #[error("estimation failure: {0}")]
    EstimationFailure(String),

    /// A linear algebra factorization failed (non-SPD covariance and similar).
    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    /// Serialization or deserialization of a model document failed.
    #[error("serialization failure: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
