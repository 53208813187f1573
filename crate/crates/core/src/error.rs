use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty sample")]
    EmptySample,

    #[error("vector is not unit norm (norm = {norm})")]
    NotUnit { norm: f64 },

    #[error("rank deficient: {context} (rank {rank} < {required}, smallest singular value {smallest:e})")]
    RankDeficient {
        context: String,
        rank: usize,
        required: usize,
        smallest: f64,
    },

    #[error("binary filter kept {found} candidates, expected {expected}")]
    SurvivorCount { found: usize, expected: usize },

    #[error("too few candidates: {found} < {required}")]
    TooFewCandidates { found: usize, required: usize },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular projected Jacobian")]
    SingularJacobian,

    #[error("degenerate: {0}")]
    Degenerate(String),

    #[error("combinatorial guard exceeded: {0}")]
    Guard(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Dimension(_)
            | Error::InvalidInput(_)
            | Error::EmptySample
            | Error::NotUnit { .. }
            | Error::Parse(_)
            | Error::Io(_) => ErrorKind::Data,
            Error::Guard(_) => ErrorKind::Usage,
            Error::RankDeficient { .. }
            | Error::SurvivorCount { .. }
            | Error::TooFewCandidates { .. }
            | Error::NonConvergence { .. }
            | Error::SingularJacobian
            | Error::Degenerate(_) => ErrorKind::Numerical,
        }
    }

    /// Short stable identifier for machine-readable reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::InvalidInput(_) => "invalid_input",
            Error::EmptySample => "empty_sample",
            Error::NotUnit { .. } => "not_unit",
            Error::RankDeficient { .. } => "rank_deficient",
            Error::SurvivorCount { .. } => "survivor_count",
            Error::TooFewCandidates { .. } => "too_few_candidates",
            Error::NonConvergence { .. } => "non_convergence",
            Error::SingularJacobian => "singular_jacobian",
            Error::Degenerate(_) => "degenerate",
            Error::Guard(_) => "guard",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
