//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, GomError>;

#[derive(Debug, Error)]
pub enum GomError {
    /// A response entry falls outside `0..=m_max`.
    #[error("entry out of range at ({row}, {col}): {value} not in 0..={max}")]
    EntryOutOfRange {
        row: usize,
        col: usize,
        value: i64,
        max: u32,
    },

    /// A file failed to parse under its declared format.
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },

    /// Shape mismatch, nonpositive scale, NaN where finite values are required, etc.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input carries no usable signal (empty after cleanup, all-zero data, ...).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A row sums to zero while the regularizer is zero.
    #[error("row {row} has zero sum; the Laplacian is singular at tau = 0")]
    ZeroRowSum { row: usize },

    /// A row with vanishing Euclidean norm cannot be normalized.
    #[error("row {row} has vanishing norm and cannot be normalized")]
    DegenerateRow { row: usize },

    /// A subspace collapsed before the requested number of components was found.
    #[error("rank deficiency in {stage}: {message}")]
    RankDeficient {
        stage: &'static str,
        message: String,
    },

    /// A small dense solve met a condition estimate beyond 1e12, which usually
    /// signals a failed vertex hunt.
    #[error("ill-conditioned solve in {stage} (condition estimate {cond:.3e})")]
    IllConditioned { stage: &'static str, cond: f64 },

    /// The rows handed to the supporting-hyperplane subproblem do not form a cone.
    #[error("no supporting hyperplane: {0}")]
    NoCone(String),

    /// Fewer corner candidates than latent classes, even after widening the margin band.
    #[error("found {found} corner candidates, need {needed}")]
    InsufficientCorners { found: usize, needed: usize },

    /// The brute-force permutation alignment only covers small K.
    #[error("K = {k} unsupported for {what} (maximum {max})")]
    UnsupportedK {
        k: usize,
        what: &'static str,
        max: usize,
    },

    /// Every candidate fit failed during model selection.
    #[error("model selection failed: no candidate number of classes produced a fit")]
    SelectionFailed,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
