use thiserror::Error;

/// Errors surfaced by the numeric core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("shape mismatch in {context}: expected {expected}, found {found}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("decomposition failed: {0}")]
    Decomposition(String),

    /// No singular direction survived the rank threshold, so there is
    /// nothing to score.
    #[error("no singular value above the rank threshold")]
    EmptyRank,

    #[error("training diverged at step {step} (loss {loss:.3e})")]
    Divergence { step: usize, loss: f64 },

    #[error("learning-rate bound precondition violated at index {index}: {detail}")]
    Precondition { index: usize, detail: String },

    #[error("convergence certificate violated at index {index}, step {step}: {detail}")]
    CertificateViolation {
        index: usize,
        step: usize,
        detail: String,
    },

    /// A zero data eigenvalue paired with a nonzero target coefficient;
    /// the limiting product would have to be infinite.
    #[error("infeasible singular-value target at index {index}")]
    Infeasible { index: usize },

    #[error("rank-deficient input: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
