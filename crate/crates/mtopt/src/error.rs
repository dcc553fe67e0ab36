//! Shared error type for the whole crate.

use thiserror::Error;

/// Errors produced by the numerical routines and the harness.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or inconsistent input (dimension mismatch, non-finite data, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Polar factor requested for a rank-deficient matrix.
    #[error("rank-deficient matrix: numerical rank {rank}, expected {expected}")]
    DegeneratePolar { rank: usize, expected: usize },

    /// Newton-Schulz orthogonalization of an all-zero matrix.
    #[error("zero gradient matrix has no orthogonal factor")]
    ZeroGradient,

    /// Cosine similarity against a zero vector. `task` names the offending
    /// task gradient when known; `None` means the anchor / mean gradient.
    #[error("cosine undefined: {} is zero", match .task {
        Some(i) => format!("task {i} gradient"),
        None => "vector".to_string(),
    })]
    UndefinedCosine { task: Option<usize> },

    /// Scalar projection onto a zero task gradient.
    #[error("projection undefined: task {task} gradient is zero")]
    UndefinedProjection { task: usize },

    /// Effective rank of an all-zero matrix.
    #[error("effective rank undefined for zero matrix")]
    UndefinedRank,

    /// Bad run configuration (unknown ids, schema violations, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Non-finite values encountered mid-run.
    #[error("numerical failure at step {step}: {reason}")]
    Numerical { step: usize, reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
